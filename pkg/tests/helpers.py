import os
from pathlib import Path

from tdamnist.cli import DATA_ENV, default_data_root


def mnist_root() -> Path | None:
    root = Path(os.environ.get(DATA_ENV, default_data_root()))
    if any((root / f"train-images-idx3-ubyte{ext}").exists() for ext in ("", ".gz")):
        return root
    return None


def mnist_file(stem: str) -> Path:
    root = mnist_root()
    for name in (stem, stem + ".gz"):
        if (root / name).exists():
            return root / name
    raise FileNotFoundError(stem)
