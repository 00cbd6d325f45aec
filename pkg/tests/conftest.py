import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from magnuspulse import ISpin, SpinSystem, build_pulse, calibrate

TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="session")
def s_only_system():
    """Isolated on-resonance S spin (single two-level case)."""
    return SpinSystem(s_count=1, s_offset=0.0)


@pytest.fixture(scope="session")
def sa_system():
    """SA: one S spin, one coupled I spin."""
    return SpinSystem(
        s_count=1,
        s_offset=TWO_PI * 12.0,
        i_spins=(ISpin(offset=TWO_PI * 40.0, j_to_s=7.0),),
    )


@pytest.fixture(scope="session")
def sax_system():
    """SAX: one S spin, two coupled I spins with an I-I coupling."""
    return SpinSystem(
        s_count=1,
        s_offset=TWO_PI * 10.0,
        i_spins=(
            ISpin(offset=TWO_PI * 35.0, j_to_s=8.0),
            ISpin(offset=-TWO_PI * 55.0, j_to_s=4.0),
        ),
        j_ii={(0, 1): 5.0},
    )


@pytest.fixture(scope="session")
def s2ax_system(sax_system):
    """S2AX: two equivalent S spins over the SAX coupling topology."""
    return SpinSystem(
        s_count=2,
        s_offset=sax_system.s_offset,
        i_spins=sax_system.i_spins,
        j_ii=sax_system.j_ii,
    )


@pytest.fixture(scope="session")
def gaussian90():
    """Gaussian pulse calibrated to a 90 degree flip over 2 ms."""
    return calibrate(build_pulse("gaussian", 2e-3, truncation=0.01), math.pi / 2)


@pytest.fixture(scope="session")
def gaussian270():
    return calibrate(build_pulse("gaussian", 2e-3, truncation=0.01), 1.5 * math.pi)


def random_fourier_pulse(rng, duration=1e-3, n_harmonics=4, target=None,
                         max_criterion=None):
    """Seeded random Fourier envelope, optionally calibrated to `target` rad.

    `max_criterion` caps the integral of |amplitude| by rescaling, keeping
    sweep cases within the intensity range of real shaped pulses (exponents
    that graze the 2*pi degeneracy need impractically dense grids to track).
    """
    from magnuspulse import abs_amplitude_integral, scale_amplitude

    a0 = rng.uniform(0.2, 1.0) * rng.choice([-1.0, 1.0])
    cos_c = rng.normal(0.0, 0.6, size=n_harmonics)
    sin_c = rng.normal(0.0, 0.6, size=n_harmonics)
    pulse = build_pulse(
        "fourier", duration, a0=a0, cos_coeffs=tuple(cos_c), sin_coeffs=tuple(sin_c)
    )
    if target is not None:
        pulse = calibrate(pulse, target)
    if max_criterion is not None:
        i_total = abs_amplitude_integral(pulse, duration)
        if i_total > max_criterion:
            pulse = scale_amplitude(pulse, max_criterion / i_total)
    return pulse


def random_small_system(rng):
    """Random SA or SAX system with moderate offsets and couplings."""
    n_i = int(rng.integers(1, 3))
    spins = tuple(
        ISpin(offset=TWO_PI * rng.uniform(-80.0, 80.0), j_to_s=rng.uniform(0.0, 12.0))
        for _ in range(n_i)
    )
    j_ii = {(0, 1): rng.uniform(0.0, 8.0)} if n_i == 2 else {}
    return SpinSystem(
        s_count=1,
        s_offset=TWO_PI * rng.uniform(-50.0, 50.0),
        i_spins=spins,
        j_ii=j_ii,
    )
