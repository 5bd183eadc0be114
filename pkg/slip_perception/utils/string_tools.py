import os
import platform

import click

if platform.system() == "Windows":
    os.system("color")

COLOR_CODES = {
    'black': '30',
    'red': '31',
    'green': '32',
    'yellow': '33',
    'blue': '34',
    'magenta': '35',
    'cyan': '36',
    'white': '37',
}


def print_colored(headline, text, color_code, end='\n', err=False):
    color_code = COLOR_CODES.get(color_code, color_code)
    color_start = f"\033[{color_code}m"
    reset = "\033[0m"
    bold_start = "\033[1m"
    if headline:
        click.echo(f"{bold_start}{color_start}{headline}{reset}", err=err, color=True)
    click.echo(f"{color_start}{text}{reset}", nl=False, err=err, color=True)
    if end:
        click.echo(end, nl=False, err=err, color=True)


def is_verbose():
    return os.environ.get('VERBOSE', 'false').lower() == 'true'


def print_verbose(text, color_code='white'):
    if is_verbose():
        print_colored('', text, color_code)


def warn(text):
    print_colored('', f'warning: {text}', 'yellow', err=True)


def format_seconds(seconds: float) -> str:
    minutes, seconds = divmod(int(seconds), 60)
    if minutes > 0:
        return f"{minutes}m, {seconds}s"
    return f"{seconds}s"
