import pytest
import numpy as np
import pandas as pd

from modelext.cli import main, parse_range, report_path
from modelext.grid_io import (
    SampledGrid1D, SampledGrid2D, read_grid_1d, read_grid_2d, read_model, sample_function_1d, write_grid_1d,
    write_grid_2d, write_model,
)
from modelext.model1d import fit_model_1d
from modelext.model2d import fit_model_2d
from modelext.models import Model1D, Model2D


def read_report(output):
    lines = report_path(output).read_text(encoding="utf-8").splitlines()
    return dict(line.split(" = ", 1) for line in lines)


@pytest.fixture
def workdir(tmp_path):
    return tmp_path


@pytest.fixture
def cosine_file(workdir):
    path = workdir / "cos.csv"
    write_grid_1d(sample_function_1d(lambda x: np.cos(2.0 * x), 0.0, 5.0, 0.05), path)
    return path


@pytest.fixture
def linear_model_file(workdir):
    path = workdir / "linear.json"
    write_model(Model1D(m=2, p=[-1.0, 2.0]), path)
    return path


def test_gen_writes_grid_and_report(workdir):
    """Test that gen samples f1 and leaves a sidecar report"""
    out = workdir / "f1.csv"
    assert main(["gen", "--function", "f1", "--a", "0", "--b", "1", "--h", "0.02", "-o", str(out)]) == 0
    assert read_grid_1d(out).N == 50
    report = read_report(out)
    assert report["status"] == "ok"
    assert report["nodes"] == "51"
    assert report["seed"] == "0"


def test_gen_bivariate(workdir):
    out = workdir / "f3.txt"
    assert main(["gen", "--function", "f3", "--a", "0", "--b", "1", "--h", "0.25", "-o", str(out)]) == 0
    assert read_grid_2d(out).shape == (5, 5)


def test_gen_is_reproducible(workdir):
    args = ["gen", "--function", "f1", "--a", "0", "--b", "1", "--h", "0.1", "--noise", "0.2", "--seed", "7"]
    first, second = workdir / "a.csv", workdir / "b.csv"
    assert main(args + ["-o", str(first)]) == 0
    assert main(args + ["-o", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_fit_then_prony_pipeline(workdir):
    grid, model, extension = workdir / "f1.csv", workdir / "model.json", workdir / "ext.csv"
    assert main(["gen", "--function", "f1", "--a", "0", "--b", "7", "--h", "0.02", "-o", str(grid)]) == 0
    assert main(["fit1d", "--input", str(grid), "--m", "6", "--n", "50", "-o", str(model)]) == 0
    assert main(["prony", "--input", str(grid), "--model", str(model), "--range", "0:14", "-o", str(extension)]) == 0
    assert read_grid_1d(extension).b == pytest.approx(14.0)
    report = read_report(extension)
    assert len(report["roots"].split()) == 6
    assert float(report["data_rms"]) < 0.1
    assert "I1" in read_report(model)


def test_fit1d_matches_library_call(workdir, cosine_file):
    """Test that the subcommand is a thin wrapper over fit_model_1d"""
    out = workdir / "model.json"
    assert main(["fit1d", "--input", str(cosine_file), "--m", "2", "--n", "3", "--u", "linear", "-o", str(out)]) == 0
    model = read_model(out)
    direct = fit_model_1d(read_grid_1d(cosine_file), 2, 3, model.u)
    assert model.u.type == "linear"
    np.testing.assert_array_equal(model.p, direct.p)
    np.testing.assert_array_equal(model.q, direct.q)


def test_extend1d_zero_data(workdir, linear_model_file):
    data, out = workdir / "zero.csv", workdir / "ext.csv"
    write_grid_1d(SampledGrid1D(a=0.0, h=0.1, values=np.zeros(21)), data)
    assert main(["extend1d", "--input", str(data), "--model", str(linear_model_file), "-o", str(out)]) == 0
    extension = read_grid_1d(out)
    assert extension.N == 40
    np.testing.assert_array_equal(extension.values, 0.0)
    assert set(read_report(out)) >= {"S_p", "E", "F", "p", "mu", "model_residual"}


def test_extend1d_backward_range(workdir, cosine_file, linear_model_file):
    out = workdir / "ext.csv"
    assert main(["extend1d", "--input", str(cosine_file), "--model", str(linear_model_file),
                 "--range=-1:6", "--mu", "1", "-o", str(out)]) == 0
    extension = read_grid_1d(out)
    assert extension.a == pytest.approx(-1.0)
    assert extension.b == pytest.approx(6.0)


def test_fit2d_matches_library_call(workdir):
    grid, out = workdir / "f3.txt", workdir / "model.json"
    assert main(["gen", "--function", "f3", "--a", "0", "--b", "1", "--h", "0.1", "-o", str(grid)]) == 0
    assert main(["fit2d", "--input", str(grid), "--m", "2", "-o", str(out)]) == 0
    model = read_model(out)
    assert isinstance(model, Model2D)
    assert model.array[-1, -1] == 1.0
    direct = fit_model_2d(read_grid_2d(grid), 2, 1)
    np.testing.assert_allclose(model.array, direct.array, rtol=1e-12, atol=1e-14)
    assert float(read_report(out)["I2"]) == pytest.approx(direct.diagnostics.objective, rel=1e-6, abs=1e-20)


def test_extend2d_direct_solver(workdir):
    grid, out = workdir / "f3.txt", workdir / "ext.txt"
    assert main(["gen", "--function", "f3", "--a", "0", "--b", "1", "--h", "0.25", "-o", str(grid)]) == 0
    assert main(["extend2d", "--input", str(grid), "--m", "2", "--domain=-0.5:1.5", "--solver", "direct",
                 "-o", str(out)]) == 0
    extension = read_grid_2d(out)
    assert extension.shape == (9, 9)
    assert extension.x0 == pytest.approx(-0.5)
    report = read_report(out)
    assert float(report["constraint_residual"]) <= 1e-6
    assert report["constraints"] == "64"


def test_splinebasis_samples(workdir, linear_model_file):
    out = workdir / "basis.csv"
    assert main(["splinebasis", "--model", str(linear_model_file), "--K", "6", "--mesh", "0.5", "-o", str(out)]) == 0
    df = pd.read_csv(out)
    assert list(df.columns) == ["x", "S1", "S2"]
    assert len(df) == 25
    assert read_report(out)["basis_size"] == "2"


def test_splinefit_extends_exponential(workdir):
    data, model, out = workdir / "exp.csv", workdir / "model.json", workdir / "ext.csv"
    write_grid_1d(sample_function_1d(lambda x: 3.0 * 2.0 ** x, 0.0, 3.0, 0.05), data)
    write_model(Model1D(m=1, p=[2.0 ** 0.1]), model)
    assert main(["splinefit", "--input", str(data), "--model", str(model), "--mesh", "0.1",
                 "--range", "0:4", "-o", str(out)]) == 0
    extension = read_grid_1d(out)
    np.testing.assert_allclose(extension.values, 3.0 * 2.0 ** extension.x, rtol=1e-5)
    report = read_report(out)
    assert report["strategy"] == "propagate"
    assert float(report["condition"]) < 1e10


def test_splinefit_global_band(workdir, window_sum_model):
    data, model, out = workdir / "const.txt", workdir / "model.json", workdir / "ext.txt"
    write_grid_2d(SampledGrid2D(x0=0.0, y0=0.0, h=0.05, values=np.full((21, 21), 1.5)), data)
    write_model(window_sum_model, model)
    assert main(["splinefit", "--input", str(data), "--model", str(model), "--mesh", "0.25",
                 "--strategy", "global-band", "--range=-0.5:1.5", "-o", str(out)]) == 0
    np.testing.assert_allclose(read_grid_2d(out).values, 1.5, atol=1e-6)
    assert read_report(out)["strategy"] == "global-band"


def test_blend_subcommand(workdir, cosine_file):
    start, end, out = workdir / "start.json", workdir / "end.json", workdir / "ext.csv"
    write_model(Model1D(m=2, p=[-1.0, 2.0 * np.cos(0.1)]), start)
    write_model(Model1D(m=2, p=[-np.exp(-0.2), 2.0 * np.exp(-0.1)]), end)
    assert main(["blend", "--input", str(cosine_file), "--model-start", str(start), "--model-end", str(end),
                 "--x-start", "5", "--x-end", "8", "--range", "0:8", "-o", str(out)]) == 0
    assert read_grid_1d(out).b == pytest.approx(8.0)
    assert float(read_report(out)["model_residual"]) < 1e-9


def test_missing_input_exits_2(workdir, linear_model_file, capsys):
    out = workdir / "ext.csv"
    code = main(["extend1d", "--input", str(workdir / "nope.csv"), "--model", str(linear_model_file), "-o", str(out)])
    assert code == 2
    assert "error code=2" in capsys.readouterr().err
    assert read_report(out)["status"] == "error"


def test_malformed_grid_exits_2(workdir, linear_model_file, capsys):
    data, out = workdir / "bad.csv", workdir / "ext.csv"
    data.write_text("t,value\n0,1\n1,2\n", encoding="utf-8")
    assert main(["extend1d", "--input", str(data), "--model", str(linear_model_file), "-o", str(out)]) == 2
    assert "type=GridFormatError" in capsys.readouterr().err


def test_wrong_model_kind_exits_2(workdir, cosine_file, window_sum_model):
    model, out = workdir / "model2d.json", workdir / "ext.csv"
    write_model(window_sum_model, model)
    assert main(["extend1d", "--input", str(cosine_file), "--model", str(model), "-o", str(out)]) == 2


def test_singular_pivot_exits_3(workdir, cosine_file, capsys):
    """Test that backward propagation through p_1 = 0 is a numerical failure"""
    model, out = workdir / "model.json", workdir / "ext.csv"
    write_model(Model1D(m=2, p=[0.0, 1.0]), model)
    code = main(["extend1d", "--input", str(cosine_file), "--model", str(model), "--range=-1:6", "--anchor", "0",
                 "-o", str(out)])
    assert code == 3
    assert "type=SingularPivotError" in capsys.readouterr().err
    assert read_report(out)["code"] == "3"


def test_parse_range():
    assert parse_range("-2:6") == (-2.0, 6.0)
    with pytest.raises(Exception):
        parse_range("6:2")
    with pytest.raises(SystemExit):
        main(["prony", "--input", "x.csv", "--range", "oops", "-o", "y.csv"])


def test_unparseable_rational_shift_exits_2(workdir, cosine_file, capsys):
    out = workdir / "model.json"
    args = ["fit1d", "--input", str(cosine_file), "--m", "2", "--n", "3", "--u", "rational:abc", "-o", str(out)]
    assert main(args) == 2
    assert "type=InputError" in capsys.readouterr().err
    assert read_report(out)["code"] == "2"
