from __future__ import annotations

import html

import markdown

from effectfuse.domain.interfaces import IReportRenderer
from effectfuse.utils.constants import CSS_REPORT, HTML_TEMPLATE


class ReportRenderer(IReportRenderer):
    """
    Converts a Markdown run report to a standalone HTML document.

    Tables come from the `extra` extension; `toc` adds heading anchors so the
    per-covariate sections can be linked.
    """

    def __init__(self, *, css: str = CSS_REPORT) -> None:
        self.css = css

    def to_html(self, markdown_text: str, *, title: str = "") -> str:
        body = markdown.markdown(
            markdown_text,
            extensions=["extra", "toc", "sane_lists"],
            output_format="html5",
        )
        return HTML_TEMPLATE.format(title=html.escape(title), css=self.css, body=body)
