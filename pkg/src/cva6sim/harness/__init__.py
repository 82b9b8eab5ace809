"""Program loading, bundled kernels, configs, reports and the command line."""
