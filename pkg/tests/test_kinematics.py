import numpy as np
import pytest
from scipy.optimize import fsolve

from deltasim.errors import NoSolution, Unreachable
from deltasim.kinematics import (
    FingerGeometry,
    finger_fk,
    finger_ik,
    finger_jacobian,
    finger_reachable,
    finger_workspace_sample,
)

GEOM = FingerGeometry()
SQRT1200 = np.sqrt(1200.0)  # z of the symmetric pose: sqrt(40^2 - 20^2)


def sphere_residuals(geom, joints, p):
    bases = geom.rail_bases
    s = np.asarray(joints, dtype=float)
    centers = np.column_stack([bases, s])
    return np.linalg.norm(p[None, :] - centers, axis=1) - geom.link_length


def fk_oracle(geom, joints, guess=None):
    """Independent FK: numerical root-finding on the three sphere constraints."""
    if guess is None:
        guess = np.array([0.0, 0.0, SQRT1200 + np.mean(joints)])
    sol = fsolve(lambda p: sphere_residuals(geom, joints, p), guess, full_output=False, xtol=1e-13)
    return np.asarray(sol)


class TestForwardKinematics:
    def test_symmetric_pose(self):
        p = finger_fk(GEOM, [0.0, 0.0, 0.0])
        np.testing.assert_allclose(p, [0.0, 0.0, SQRT1200], atol=1e-12)

    def test_equal_offsets_translate_along_rail_axis(self):
        p = finger_fk(GEOM, [10.0, 10.0, 10.0])
        np.testing.assert_allclose(p, [0.0, 0.0, SQRT1200 + 10.0], atol=1e-12)

    def test_asymmetric_pose_matches_root_finder(self):
        joints = np.array([2.0, 7.5, 13.1])
        p = finger_fk(GEOM, joints)
        expected = fk_oracle(GEOM, joints)
        np.testing.assert_allclose(p, expected, atol=1e-8)
        # Regression pin, frozen from the oracle above.
        np.testing.assert_allclose(p, [9.30015443, 4.83960714, 40.23730518], atol=1e-7)

    def test_sphere_residuals_tiny(self):
        rng = np.random.default_rng(3)
        joints = rng.uniform(0, GEOM.stroke, (200, 3))
        pts = finger_fk(GEOM, joints)
        for s, p in zip(joints, pts):
            assert np.max(np.abs(sphere_residuals(GEOM, s, p))) <= 1e-9

    def test_larger_z_branch(self):
        rng = np.random.default_rng(4)
        for s in rng.uniform(0, GEOM.stroke, (50, 3)):
            p = finger_fk(GEOM, s)
            assert p[2] >= np.max(s)

    def test_no_solution_for_absurd_geometry(self):
        geom = FingerGeometry(base_radius=20.0, link_length=20.5)
        # Spread the sliders farther apart than the links can span.
        with pytest.raises(NoSolution):
            finger_fk(geom, [0.0, 0.0, 60.0])


class TestInverseKinematics:
    def test_symmetric_inverse(self):
        s = finger_ik(GEOM, [0.0, 0.0, SQRT1200])
        np.testing.assert_allclose(s, [0.0, 0.0, 0.0], atol=1e-12)

    def test_translation_equivariance(self):
        s = finger_ik(GEOM, [0.0, 0.0, SQRT1200 + 10.0])
        np.testing.assert_allclose(s, [10.0, 10.0, 10.0], atol=1e-12)

    def test_unreachable_raises(self):
        # |p_xy - b_1| for the 120-degree rail exceeds the 40 mm link.
        with pytest.raises(Unreachable):
            finger_ik(GEOM, [30.0, 0.0, 30.0])
        assert not finger_reachable(GEOM, [30.0, 0.0, 30.0])

    def test_geometrically_reachable_target_round_trips(self):
        # All legs within link length here, so IK must exist and round-trip.
        p = np.array([25.0, 0.0, 30.0])
        s = finger_ik(GEOM, p)
        np.testing.assert_allclose(finger_fk(GEOM, s), p, atol=1e-9)

    def test_round_trip_10k(self):
        rng = np.random.default_rng(7)
        joints = rng.uniform(0, GEOM.stroke, (10_000, 3))
        back = finger_ik(GEOM, finger_fk(GEOM, joints))
        assert np.max(np.abs(back - joints)) <= 1e-9

    def test_ik_not_clamped(self):
        p = finger_fk(GEOM, [0.0, 0.0, 0.0])
        p = p + np.array([0.0, 0.0, -5.0])  # below the stroke floor
        s = finger_ik(GEOM, p)
        assert np.all(s < 0)
        assert not finger_reachable(GEOM, p)

    def test_threefold_symmetry(self):
        # Rotating the target 120 degrees about the finger axis permutes the legs.
        rng = np.random.default_rng(11)
        rot = np.array(
            [
                [np.cos(2 * np.pi / 3), -np.sin(2 * np.pi / 3), 0.0],
                [np.sin(2 * np.pi / 3), np.cos(2 * np.pi / 3), 0.0],
                [0.0, 0.0, 1.0],
            ]
        )
        for s in rng.uniform(2, GEOM.stroke - 2, (20, 3)):
            p = finger_fk(GEOM, s)
            s_rot = finger_ik(GEOM, rot @ p)
            np.testing.assert_allclose(s_rot, np.roll(s, 1), atol=1e-9)


class TestJacobian:
    @staticmethod
    def fd_jacobian(joints, h=1e-6):
        J = np.empty((3, 3))
        for k in range(3):
            dp = np.zeros(3)
            dp[k] = h
            J[:, k] = (finger_fk(GEOM, joints + dp) - finger_fk(GEOM, joints - dp)) / (2 * h)
        return J

    def test_symmetric_pose_row_sums(self):
        J = finger_jacobian(GEOM, [0.0, 0.0, 0.0])
        # Equal-offset translation: J @ (1,1,1) = (0,0,1).
        np.testing.assert_allclose(J @ np.ones(3), [0.0, 0.0, 1.0], atol=1e-12)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        for s in rng.uniform(1.0, GEOM.stroke - 1.0, (100, 3)):
            J = finger_jacobian(GEOM, s)
            J_fd = self.fd_jacobian(s)
            rel = np.linalg.norm(J - J_fd) / np.linalg.norm(J_fd)
            assert rel <= 1e-6

    def test_boundary_pose(self):
        J = finger_jacobian(GEOM, [0.0, 0.0, GEOM.stroke])
        assert np.all(np.isfinite(J))
        J_fd = self.fd_jacobian(np.array([0.0, 0.0, GEOM.stroke]))
        assert np.linalg.norm(J - J_fd) / np.linalg.norm(J_fd) <= 1e-6


class TestWorkspaceSample:
    def test_single_point_is_first_draw(self):
        pts = finger_workspace_sample(GEOM, 1, seed=42)
        joints = np.random.default_rng(42).uniform(0, GEOM.stroke, (1, 3))
        np.testing.assert_allclose(pts, finger_fk(GEOM, joints))

    def test_deterministic_per_seed(self):
        a = finger_workspace_sample(GEOM, 100, seed=5)
        b = finger_workspace_sample(GEOM, 100, seed=5)
        np.testing.assert_array_equal(a, b)

    def test_residuals_and_z_depth(self):
        pts = finger_workspace_sample(GEOM, 10_000, seed=9)
        joints = finger_ik(GEOM, pts)
        back = finger_fk(GEOM, joints)
        assert np.max(np.abs(back - pts)) <= 1e-9
        z_depth = pts[:, 2].max() - pts[:, 2].min()
        # Prismatic actuation: bounding-box depth tracks the stroke. The
        # sampled estimate undershoots because extreme z needs all three
        # sliders near the same stroke end at once; pinned from this seed.
        assert abs(z_depth - GEOM.stroke) <= 2.0
        np.testing.assert_allclose(z_depth, 18.7903099222083, atol=1e-9)


class TestProperties:
    def test_translation_equivariance_exact(self):
        rng = np.random.default_rng(17)
        for s in rng.uniform(2.0, GEOM.stroke - 6.0, (50, 3)):
            p0 = finger_fk(GEOM, s)
            p5 = finger_fk(GEOM, s + 5.0)
            np.testing.assert_allclose(p5 - p0, [0.0, 0.0, 5.0], atol=1e-12)
