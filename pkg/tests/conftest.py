from pathlib import Path

import pytest

from coughscreen.config import load_config
from coughscreen.synthetic import make_synthetic_corpus

_criteria: dict[str, list[str]] = {}


def pytest_runtest_logreport(report):
    names = getattr(report, "criteria", None)
    if not names:
        return
    failed = report.failed
    if report.when == "call" or failed or report.skipped:
        for name in names:
            outcomes = _criteria.setdefault(name, [])
            outcomes.append("FAIL" if failed else "SKIP" if report.skipped else "PASS")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    report.criteria = [m.args[0] for m in item.iter_markers("criterion")]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcomes in _criteria.items():
        verdict = "FAIL" if "FAIL" in outcomes else "SKIP" if "SKIP" in outcomes else "PASS"
        terminalreporter.write_line(f"{verdict}  {name}")


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory) -> Path:
    """Twenty synthetic subjects, ten per class."""
    return make_synthetic_corpus(tmp_path_factory.mktemp("corpus"), n_subjects=20, seed=5)


def quick_config(manifest, out, **cnn):
    """Config for fast pipeline runs: tiny grids, few coalitions, CNN off unless asked."""
    path = Path(out).parent / f"{Path(out).name}.toml"
    cnn_lines = "".join(f"cnn.{k} = {str(v).lower() if isinstance(v, bool) else v}\n" for k, v in {"enabled": False, **cnn}.items())
    path.write_text(
        f'manifest = "{manifest}"\noutput_dir = "{out}"\nseed = 3\nsplit.test_fraction = 0.2\nsplit.cv_folds = 3\n'
        "shap.n_coalitions = 128\nshap.max_instances = 6\n"
        'grid.svm = [{kernel = "rbf", C = 1.0, gamma = 0.1}, {kernel = "linear", C = 1.0}]\n'
        "grid.lr = [{l2 = 1.0}]\n"
        "grid.gbt = [{n_rounds = 20, max_depth = 2, learning_rate = 0.3, lam = 1.0, gamma = 0.0}]\n" + cnn_lines
    )
    return path
