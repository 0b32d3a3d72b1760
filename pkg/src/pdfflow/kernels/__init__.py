"""Kernel dispatch: compiled lane when available, numpy reference otherwise.

Set PDFFLOW_KERNELS=reference (or =compiled) before import to force a lane;
forcing "compiled" when the extension is missing raises at import so a
benchmark cannot silently measure the wrong lane. Both lanes are equivalence
tested; within one build the selected lane is fixed, keeping emitted
artifacts byte-stable for a given configuration and seed.
"""

from __future__ import annotations

import os

from . import reference

_forced = os.environ.get("PDFFLOW_KERNELS", "").strip().lower()
if _forced not in ("", "reference", "compiled"):
    raise ImportError(
        f"PDFFLOW_KERNELS must be 'reference' or 'compiled', got {_forced!r}")

if _forced == "reference":
    _impl = reference
else:
    try:
        from . import _fast as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _forced == "compiled":
            raise ImportError(
                "PDFFLOW_KERNELS=compiled but the compiled kernels are not "
                "built; reinstall with a working C toolchain")
        _impl = reference

envelope = _impl.envelope
velocity_gaussian = _impl.velocity_gaussian
region_member = reference.region_member
reciprocal_factor = _impl.reciprocal_factor
initial_density = _impl.initial_density

ENVELOPE_SCALE = reference.ENVELOPE_SCALE
GAUSSIAN_NORM = reference.GAUSSIAN_NORM
INV_VAR = reference.INV_VAR
REGION_LO = reference.REGION_LO
REGION_HI = reference.REGION_HI


def backend_name() -> str:
    """Name of the lane serving the kernel calls in this process."""
    return _impl.BACKEND


def lanes() -> dict:
    """All importable lanes keyed by name, for equivalence tests and timing."""
    out = {"reference": reference}
    try:
        from . import _fast  # type: ignore[attr-defined]
        out["compiled"] = _fast
    except ImportError:
        pass
    return out
