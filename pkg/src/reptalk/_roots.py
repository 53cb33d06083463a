"""Plain bisection on a sign-changing bracket."""

import math


def bisect(f, lo, hi, xtol=1e-10, maxiter=200, flo=None, fhi=None, ftol=None):
    """Return a root of ``f`` in ``[lo, hi]`` by bisection.

    ``f(lo)`` and ``f(hi)`` must have strictly opposite signs; a zero at
    either endpoint is returned as-is.  Raises ``ValueError`` otherwise.
    Iteration stops once the bracket is narrower than ``xtol`` and, when
    ``ftol`` is given, the bracket endpoint with the smaller residual is
    within ``ftol`` of zero (or the bracket cannot shrink further).
    """
    if flo is None:
        flo = f(lo)
    if fhi is None:
        fhi = f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if math.isnan(flo) or math.isnan(fhi) or (flo > 0) == (fhi > 0):
        raise ValueError(
            f"no sign change on [{lo!r}, {hi!r}]: f(lo)={flo!r}, f(hi)={fhi!r}"
        )
    lo_positive = flo > 0
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if hi - lo <= xtol and (ftol is None or min(abs(flo), abs(fhi)) <= ftol):
            break
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == lo_positive:
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    if ftol is None:
        return 0.5 * (lo + hi)
    return lo if abs(flo) <= abs(fhi) else hi
