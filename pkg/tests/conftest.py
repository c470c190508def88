import numpy as np
import pytest

from xrlsim.dynamics import Simulator, leg_ik, standing_pose
from xrlsim.params import RobotParams


@pytest.fixture(scope="session")
def params():
    return RobotParams()


@pytest.fixture(scope="session")
def manifold_configs(params):
    """100 random on-manifold configurations (seeded) with their torso poses."""
    return sample_manifold(np.random.default_rng(2024), 100, params)


def sample_manifold(rng, n, params):
    """Random reachable torso poses solved to joint vectors.

    Ranges keep the hip targets inside the leg annulus with margin and the
    orientations solvable; the seed chain starts from a mid-squat solve.
    """
    us, qs = [], []
    u_mid = standing_pose(params)
    u_mid[2] -= 0.2
    q_prev = leg_ik(u_mid, np.zeros(12), params)
    while len(qs) < n:
        u = np.concatenate([
            rng.uniform(-0.03, 0.03, 2),
            [rng.uniform(0.90, 1.22)],
            rng.uniform(-0.10, 0.10, 3),
        ])
        q = leg_ik(u, q_prev, params)
        us.append(u)
        qs.append(q)
        q_prev = q
    return np.array(us), np.array(qs)
