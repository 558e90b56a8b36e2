from __future__ import annotations

from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from effectfuse.services.report import fit_report, markdown_table, study_report
from effectfuse.services.simulation import StudyResult

HEADER = {"version": "0.3.0", "seed": 3, "config": {}}


def test_markdown_table_formats_cells():
    frame = pd.DataFrame({"name": ["a|b", "c"], "value": [1.0 / 3.0, np.nan], "n": [1, None]})
    lines = markdown_table(frame).splitlines()
    assert lines[0] == "| name | value | n |"
    assert lines[1] == "|---|---|---|"
    assert lines[2] == "| a\\|b | 0.3333 | 1 |"
    assert lines[3] == "| c |  |  |"


def test_markdown_table_empty():
    assert markdown_table(pd.DataFrame()) == "_no rows_\n"


def test_fit_report_sections(small_fit):
    md = fit_report(small_fit, nu=100.0, header=HEADER)
    assert md.startswith("# effectfuse fit (nu = 100)")
    assert "- seed: `3`" in md
    assert "## a" in md and "## b" in md
    assert "- most frequent (" in md
    assert "- PAM, k = " in md
    assert "## Refitted models" in md
    assert "| full |" in md
    assert "### most" in md and "### pam" in md


def test_fit_report_marks_the_zero_block(small_fit):
    md = fit_report(small_fit, nu=100.0, header=HEADER)
    # the baseline level "0" always sits in the bold block
    assert "**{0" in md


def test_study_report_lists_failures(toy_design):
    failures = [
        {"rep": 0, "nu": 10.0, "psi_mode": "fixed", "error": "NumericalError", "message": "boom"}
    ]
    result = StudyResult(
        design=toy_design, cluster=pd.DataFrame(), criteria=pd.DataFrame(), failures=failures
    )
    md = study_report(result, header=HEADER)
    assert "# effectfuse simulation study" in md
    assert "- nu grid: 100" in md
    assert "## Failures (1)" in md
    assert "| 0 | 10 | fixed | NumericalError | boom |" in md


@pytest.mark.parametrize("variance,label", [(True, "variance"), (False, "sd")])
def test_study_report_names_the_noise_scale(toy_design, variance, label):
    design = replace(toy_design, noise_is_variance=variance)
    result = StudyResult(
        design=design, cluster=pd.DataFrame(), criteria=pd.DataFrame(), failures=[]
    )
    assert f"- noise {label}: 0.1" in study_report(result, header=HEADER)
