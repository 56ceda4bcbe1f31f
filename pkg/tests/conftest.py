import pytest

from helpers import case_study_csv_text, load_case_study


@pytest.fixture(scope="session")
def case_csv_path(tmp_path_factory):
    p = tmp_path_factory.mktemp("case") / "case_study.csv"
    p.write_text(case_study_csv_text())
    return str(p)


@pytest.fixture(scope="session")
def case_panel():
    return load_case_study()
