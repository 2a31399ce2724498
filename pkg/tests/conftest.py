import numpy as np
import pytest

from spinsense.states import SpinState
from spinsense.su2 import HalfInt

# J = 2 demo state with randomly-chosen components, used by the Husimi
# orientation tests (amplitudes ordered m = +2 ... -2)
DEMO_J2_AMPS = np.array([
    0.000394688 + 0.409134j,
    0.0324599 + 0.0448131j,
    0.494021 + 0.484609j,
    0.483644 + 0.114779j,
    0.100279 + 0.305783j,
])


@pytest.fixture(scope="session")
def demo_j2_state() -> SpinState:
    return SpinState.from_amplitudes(HalfInt(4), DEMO_J2_AMPS)


def random_pure_state(j: HalfInt, rng) -> SpinState:
    amps = rng.standard_normal(j.dim) + 1j * rng.standard_normal(j.dim)
    return SpinState.from_amplitudes(j, amps)


def random_params(rng, theta_range=(0.05, 2.9), cap_range=(0.05, 3.0)):
    from spinsense.su2 import RotationParams
    return RotationParams(rng.uniform(*theta_range), rng.uniform(*cap_range),
                          rng.uniform(0.0, 2.0 * np.pi))
