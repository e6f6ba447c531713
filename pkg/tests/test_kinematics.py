import numpy as np
import pytest

from rmbench.errors import DimensionMismatch, NoConvergence, Unreachable
from rmbench.rng import make_rng
from rmbench.sim2d import KinematicChain, fk, ik, jacobian

CHAIN = KinematicChain((1.0, 1.0))


class TestFk:
    def test_fully_extended(self):
        assert np.allclose(fk(CHAIN, [0.0, 0.0]), [2.0, 0.0, 0.0])

    def test_first_joint_quarter_turn(self):
        pose = fk(CHAIN, [np.pi / 2, 0.0])
        assert np.allclose(pose, [0.0, 2.0, np.pi / 2], atol=1e-12)

    def test_elbow_back(self):
        pose = fk(CHAIN, [np.pi / 2, -np.pi / 2])
        assert np.allclose(pose, [1.0, 1.0, 0.0], atol=1e-12)

    def test_base_offset(self):
        chain = KinematicChain((1.0, 1.0), base=(0.5, -0.5, np.pi / 2))
        pose = fk(chain, [0.0, 0.0])
        assert np.allclose(pose, [0.5, 1.5, np.pi / 2], atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            fk(CHAIN, [0.1])

    def test_jacobian_matches_finite_differences(self):
        q = np.array([0.7, -0.4])
        J = jacobian(CHAIN, q)
        h = 1e-7
        for j in range(2):
            dq = np.zeros(2)
            dq[j] = h
            fd = (fk(CHAIN, q + dq)[:2] - fk(CHAIN, q - dq)[:2]) / (2 * h)
            assert np.allclose(J[:, j], fd, atol=1e-6)


class TestIk:
    def test_roundtrip_1000_random_targets(self):
        rng = make_rng(0, 50)
        worst = 0.0
        for _ in range(1000):
            q_star = rng.uniform(-np.pi, np.pi, 2)
            target = fk(CHAIN, q_star)[:2]
            q = ik(CHAIN, target, rng.uniform(-1.0, 1.0, 2))
            worst = max(worst, float(np.linalg.norm(fk(CHAIN, q)[:2] - target)))
        assert worst < 1e-6

    def test_full_extension_collinear(self):
        q = ik(CHAIN, np.array([2.0, 0.0]), np.array([0.4, -0.3]))
        assert np.linalg.norm(fk(CHAIN, q)[:2] - [2.0, 0.0]) < 1e-6
        assert abs(q[1]) < 1e-9  # relative angles all zero

    def test_just_inside_boundary(self):
        target = np.array([2.0 - 1e-6, 0.0])
        q = ik(CHAIN, target, np.array([0.5, 0.5]))
        assert np.linalg.norm(fk(CHAIN, q)[:2] - target) < 1e-6

    def test_unreachable(self):
        with pytest.raises(Unreachable):
            ik(CHAIN, np.array([2.1, 0.0]), np.zeros(2))

    def test_inner_annulus_no_convergence(self):
        chain = KinematicChain((2.0, 1.0))  # cannot reach closer than 1.0
        with pytest.raises(NoConvergence) as err:
            ik(chain, np.array([0.05, 0.0]), np.array([0.5, 0.5]))
        assert err.value.residual > 0

    def test_three_link_roundtrip(self):
        chain = KinematicChain((1.0, 0.7, 0.5))
        rng = make_rng(1, 50)
        for _ in range(100):
            target = fk(chain, rng.uniform(-np.pi, np.pi, 3))[:2]
            q = ik(chain, target, rng.uniform(-1.0, 1.0, 3))
            assert np.linalg.norm(fk(chain, q)[:2] - target) < 1e-6
