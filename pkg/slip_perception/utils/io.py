import hashlib
import os

from slip_perception.errors import DataError


def persist_file(file_content, file_path):
    with open(file_path, 'w', encoding='utf-8') as f:
        f.write(file_content)


def ensure_writable_dir(path):
    path = os.path.abspath(os.path.expanduser(path))
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise DataError(f'cannot create output directory {path}: {e.strerror}') from e
    if not os.access(path, os.W_OK):
        raise DataError(f'output directory {path} is not writable')
    return path


def sha256_file(file_path, chunk_size=1 << 20):
    digest = hashlib.sha256()
    with open(file_path, 'rb') as f:
        for chunk in iter(lambda: f.read(chunk_size), b''):
            digest.update(chunk)
    return digest.hexdigest()
