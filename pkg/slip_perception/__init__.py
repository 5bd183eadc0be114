__version__ = '0.1.0'

from slip_perception.cli import main
