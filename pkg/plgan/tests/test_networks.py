import torch

from plgan.networks import PatchDiscriminator, UnetGenerator, make_pair


class TestGenerator:
    def test_output_spatial_dims_match_input(self):
        for cin, cout in ((1, 3), (3, 1)):
            g = UnetGenerator(cin, cout, base=8)
            x = torch.rand(2, cin, 64, 64)
            y = g(x)
            assert y.shape == (2, cout, 64, 64)

    def test_output_in_unit_range(self):
        g = UnetGenerator(1, 3, base=8)
        y = g(torch.rand(1, 1, 64, 64))
        assert float(y.min()) >= 0.0 and float(y.max()) <= 1.0

    def test_dropout_off_at_eval(self):
        g = UnetGenerator(1, 3, base=8)
        g.eval()
        x = torch.rand(1, 1, 64, 64)
        with torch.no_grad():
            a = g(x)
            b = g(x)
        assert torch.equal(a, b)


class TestDiscriminator:
    def test_score_grid_in_unit_interval(self):
        d = PatchDiscriminator(4, base=8)
        grid = d(torch.rand(2, 1, 64, 64), torch.rand(2, 3, 64, 64))
        assert float(grid.min()) >= 0.0 and float(grid.max()) <= 1.0

    def test_grid_shape_depends_only_on_input_size(self):
        d = PatchDiscriminator(4, base=8)
        g64 = d(torch.rand(1, 1, 64, 64), torch.rand(1, 3, 64, 64))
        g32 = d(torch.rand(1, 1, 32, 32), torch.rand(1, 3, 32, 32))
        assert g64.shape[2:] == (16, 16)
        assert g32.shape[2:] == (8, 8)

    def test_score_averages_to_scalar_per_item(self):
        d = PatchDiscriminator(4, base=8)
        s = d.score(torch.rand(3, 1, 64, 64), torch.rand(3, 3, 64, 64))
        assert s.shape == (3,)
        assert float(s.min()) >= 0.0 and float(s.max()) <= 1.0


class TestMakePair:
    def test_directions(self):
        g, d = make_pair("f2o")
        assert g(torch.rand(1, 1, 64, 64)).shape[1] == 3
        g, d = make_pair("o2f")
        assert g(torch.rand(1, 3, 64, 64)).shape[1] == 1

    def test_unknown_direction(self):
        import pytest

        with pytest.raises(ValueError):
            make_pair("x2y")
