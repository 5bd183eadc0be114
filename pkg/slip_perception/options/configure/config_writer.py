import os

from slip_perception.config import PipelineConfig, dump_config
from slip_perception.errors import ConfigError
from slip_perception.utils.io import ensure_writable_dir, persist_file
from slip_perception.utils.string_tools import print_colored


def write_default_config(path, config: PipelineConfig = None, overwrite=False):
    path = os.path.abspath(os.path.expanduser(path))
    if os.path.exists(path) and not overwrite:
        raise ConfigError(f'{path} already exists, pass --force to overwrite it')
    ensure_writable_dir(os.path.dirname(path))
    persist_file(dump_config(config or PipelineConfig()), path)
    print_colored('', f'config written to {path}', 'green')
    return path
