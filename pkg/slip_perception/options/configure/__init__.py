from slip_perception.options.configure.config_writer import write_default_config
