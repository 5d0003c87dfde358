import logging
from typing import Dict

import pandas as pd
from openpyxl import load_workbook
from openpyxl.chart import BarChart, Reference
from openpyxl.styles import Alignment, Font, PatternFill
from openpyxl.utils import get_column_letter

logger = logging.getLogger(__name__)

SHEET_NAMES = {
    "return_profiles": "Return Profiles",
    "distances": "Wasserstein",
    "distance_gaps": "KIX Distance Gaps",
}


class ExcelReportGenerator:
    """Writes the comparison tables into one workbook with bar charts"""

    def __init__(self, output_path: str):
        self.output_path = output_path

    def generate_report(self, tables: Dict[str, pd.DataFrame]):
        """
        Generate the workbook, one sheet per table

        Args:
            tables: frames keyed like ``SHEET_NAMES``
        """
        logger.info("Starting Excel report generation")
        with pd.ExcelWriter(self.output_path, engine="openpyxl") as writer:
            for key, sheet_name in SHEET_NAMES.items():
                frame = tables.get(key)
                if frame is None:
                    continue
                frame.to_excel(writer, sheet_name=sheet_name, index=False)
                worksheet = writer.sheets[sheet_name]
                for idx, col in enumerate(frame.columns):
                    longest = frame[col].astype(str).apply(len).max() if len(frame) else 0
                    worksheet.column_dimensions[get_column_letter(idx + 1)].width = min(max(longest, len(col) + 2), 50)

        self._add_charts_and_formatting(tables)
        logger.info(f"Excel report saved to {self.output_path}")

    def _add_charts_and_formatting(self, tables: Dict[str, pd.DataFrame]):
        wb = load_workbook(self.output_path)
        for sheet_name in wb.sheetnames:
            self._format_table_header(wb[sheet_name])

        profiles = tables.get("return_profiles")
        if profiles is not None and len(profiles):
            sheet = wb[SHEET_NAMES["return_profiles"]]
            self._add_bar_chart(sheet, list(profiles.columns).index("mean") + 1, len(profiles),
                                "Mean top-k return per variant and task", "Return")
        distances = tables.get("distances")
        if distances is not None and len(distances):
            sheet = wb[SHEET_NAMES["distances"]]
            self._add_bar_chart(sheet, list(distances.columns).index("distance") + 1, len(distances),
                                "Wasserstein distance to task 0", "Distance")
        wb.save(self.output_path)

    def _add_bar_chart(self, sheet, value_col: int, rows: int, title: str, y_title: str):
        # labels are the concatenated variant/task of the first two columns
        label_col = sheet.max_column + 2
        sheet.cell(row=1, column=label_col, value="label")
        for row in range(2, rows + 2):
            sheet.cell(row=row, column=label_col,
                       value=f"{sheet.cell(row=row, column=1).value} t{sheet.cell(row=row, column=2).value}")

        chart = BarChart()
        chart.title = title
        chart.y_axis.title = y_title
        chart.add_data(Reference(sheet, min_col=value_col, min_row=1, max_row=rows + 1), titles_from_data=True)
        chart.set_categories(Reference(sheet, min_col=label_col, min_row=2, max_row=rows + 1))
        chart.style = 10
        sheet.add_chart(chart, f"{get_column_letter(label_col + 2)}2")

    def _format_table_header(self, sheet):
        header_font = Font(bold=True, color="FFFFFF")
        header_fill = PatternFill(start_color="4472C4", end_color="4472C4", fill_type="solid")
        header_alignment = Alignment(horizontal="center", vertical="center")
        for cell in sheet[1]:
            cell.font = header_font
            cell.fill = header_fill
            cell.alignment = header_alignment
