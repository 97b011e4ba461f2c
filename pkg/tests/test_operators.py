import numpy as np
import pytest

from deeptv.grid import Field, Grid
from deeptv.operators import (
    Kernel,
    adjoint,
    apply,
    blur_op,
    gaussian_kernel,
    identity_op,
    kernel_from_text,
    mask_from_image,
    mask_op,
)


def random_field(grid, seed=0):
    return Field(np.random.default_rng(seed).standard_normal(grid.shape), grid)


class TestGaussianKernel:
    def test_size_one_is_identity_mass(self):
        k = gaussian_kernel(1, 5.0)
        np.testing.assert_array_equal(k.weights, [[1.0]])

    def test_wide_sigma_is_near_uniform(self):
        # sigma much larger than the window flattens the profile; direct
        # evaluation of the sampled Gaussian is the reference
        k = gaussian_kernel(11, 20.0)
        r = np.arange(11) - 5
        ii, jj = np.meshgrid(r, r, indexing="ij")
        direct = np.exp(-(ii**2 + jj**2) / (2 * 20.0**2))
        direct /= direct.sum()
        np.testing.assert_allclose(k.weights, direct, rtol=1e-14)
        spread = np.abs(k.weights - 1 / 121) * 121
        assert spread.max() < 0.04  # within 4% of uniform

    def test_small_sigma_limits_to_delta(self):
        k = gaussian_kernel(3, 1e-4)
        expected = np.zeros((3, 3))
        expected[1, 1] = 1.0
        np.testing.assert_array_equal(k.weights, expected)

    def test_even_size_rejected(self):
        with pytest.raises(ValueError):
            gaussian_kernel(4, 1.0)
        with pytest.raises(ValueError):
            gaussian_kernel(3, 0.0)

    def test_kernel_validation(self):
        with pytest.raises(ValueError, match="odd"):
            Kernel(np.ones((2, 2)))
        with pytest.raises(ValueError, match="nonneg"):
            Kernel(np.array([[1.0, -0.1, 1.0]] * 3))
        with pytest.raises(ValueError, match="rotation"):
            Kernel(np.array([[0.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]]))

    def test_from_text(self, tmp_path):
        path = tmp_path / "k.txt"
        path.write_text("0 1 0\n1 4 1\n0 1 0\n")
        k = kernel_from_text(path)
        assert k.weights.sum() == pytest.approx(1.0, abs=1e-15)
        assert k.weights[1, 1] == pytest.approx(0.5)


class TestApply:
    def test_identity(self):
        g = Grid.unit_square(6)
        u = random_field(g)
        np.testing.assert_array_equal(apply(identity_op(g), u).values, u.values)

    def test_mask_zeroes_the_hole(self):
        g = Grid.unit_square(4)
        keep = np.ones((4, 4))
        keep[1:3, 1:3] = 0.0
        op = mask_op(Field(keep, g))
        u = random_field(g, 1)
        out = apply(op, u)
        np.testing.assert_array_equal(out.values[1:3, 1:3], 0.0)
        np.testing.assert_array_equal(out.values[0], u.values[0])

    def test_mask_requires_binary(self):
        g = Grid.unit_square(3)
        with pytest.raises(ValueError):
            mask_op(Field(np.full((3, 3), 0.5), g))

    def test_delta_kernel_blur_is_identity(self):
        g = Grid.unit_square(8)
        delta = np.zeros((3, 3))
        delta[1, 1] = 1.0
        op = blur_op(Kernel(delta), g)
        u = random_field(g, 2)
        np.testing.assert_allclose(apply(op, u).values, u.values, atol=1e-15)

    def test_blur_preserves_constants_in_the_interior(self):
        g = Grid.unit_square(12)
        op = blur_op(gaussian_kernel(5, 1.5), g)
        out = apply(op, Field(np.full((12, 12), 0.8), g))
        np.testing.assert_allclose(out.values[2:-2, 2:-2], 0.8, atol=1e-12)

    def test_grid_mismatch(self):
        op = identity_op(Grid.unit_square(4))
        with pytest.raises(ValueError):
            apply(op, random_field(Grid.unit_square(5)))

    def test_linearity(self):
        g = Grid.unit_square(9)
        op = blur_op(gaussian_kernel(3, 1.0), g)
        rng = np.random.default_rng(3)
        for _ in range(20):
            a, b = rng.standard_normal(2)
            u, v = rng.standard_normal((2, 9, 9))
            lhs = apply(op, Field(a * u + b * v, g)).values
            rhs = a * apply(op, Field(u, g)).values + b * apply(op, Field(v, g)).values
            np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestAdjoint:
    @pytest.mark.parametrize("kind", ["identity", "mask", "blur"])
    def test_inner_product_identity(self, kind):
        g = Grid.unit_square(8)
        if kind == "identity":
            op = identity_op(g)
        elif kind == "mask":
            keep = (np.arange(64).reshape(8, 8) % 3 > 0).astype(float)
            op = mask_op(Field(keep, g))
        else:
            op = blur_op(gaussian_kernel(3, 0.8), g)
        rng = np.random.default_rng(17)
        for _ in range(100):
            u, r = rng.standard_normal((2, 8, 8))
            lhs = float((apply(op, Field(u, g)).values * r).sum())
            rhs = float((u * adjoint(op, Field(r, g)).values).sum())
            assert lhs == pytest.approx(rhs, abs=1e-12 * max(1.0, abs(lhs)))

    def test_mask_is_self_adjoint(self):
        g = Grid.unit_square(5)
        keep = (np.arange(25).reshape(5, 5) % 2).astype(float)
        op = mask_op(Field(keep, g))
        r = random_field(g, 4)
        np.testing.assert_array_equal(adjoint(op, r).values, apply(op, r).values)

    def test_symmetric_kernel_is_self_adjoint(self):
        g = Grid.unit_square(7)
        op = blur_op(gaussian_kernel(3, 1.0), g)
        r = random_field(g, 5)
        np.testing.assert_array_equal(adjoint(op, r).values, apply(op, r).values)


class TestMaskFromImage:
    def test_nonzero_pixels_keep(self, tmp_path):
        from deeptv.imaging import Image, save_image

        g = Grid.unit_square(4)
        vals = np.zeros((4, 4))
        vals[:2] = 1.0
        save_image(Image(vals), tmp_path / "mask.png", bits=8)
        op = mask_from_image(tmp_path / "mask.png", g)
        np.testing.assert_array_equal(op.mask[:2], 1.0)
        np.testing.assert_array_equal(op.mask[2:], 0.0)

    def test_shape_mismatch(self, tmp_path):
        from deeptv.imaging import Image, save_image

        save_image(Image(np.ones((3, 3))), tmp_path / "m.png", bits=8)
        with pytest.raises(ValueError, match="does not match"):
            mask_from_image(tmp_path / "m.png", Grid.unit_square(4))
