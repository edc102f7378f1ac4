"""Backend selection for the MLP training loop.

The compiled kernel is used when it was built; set
``LABELNOISE_BACKEND=python`` to force the numpy fallback.
"""

import os

from labelnoise._core import _mlp_py

python_train_epochs = _mlp_py.train_epochs

try:
    from labelnoise._core._mlp_kernel import train_epochs as compiled_train_epochs
except ImportError:  # extension not built
    compiled_train_epochs = None

if compiled_train_epochs is not None and os.environ.get("LABELNOISE_BACKEND", "").lower() != "python":
    BACKEND = "compiled"
    train_epochs = compiled_train_epochs
else:
    BACKEND = "python"
    train_epochs = python_train_epochs


def get_train_epochs(backend=None):
    """Kernel for ``backend`` (``"compiled"``, ``"python"`` or ``None`` for the default)."""
    if backend is None:
        return train_epochs
    if backend == "python":
        return python_train_epochs
    if backend == "compiled":
        if compiled_train_epochs is None:
            raise ImportError("compiled MLP kernel is not available")
        return compiled_train_epochs
    raise ValueError(f"unknown backend {backend!r}")
