from openpyxl.styles import Font, PatternFill

# Fills for gate status rows in the summary workbook
PASS_FILL = PatternFill(start_color="00FF00", end_color="00FF00", fill_type="solid")
FAIL_FILL = PatternFill(start_color="FF0000", end_color="FF0000", fill_type="solid")
WARN_FILL = PatternFill(start_color="FFFF00", end_color="FFFF00", fill_type="solid")
HEADER_FILL = PatternFill(start_color="0000FF", end_color="0000FF", fill_type="solid")
HEADER_FONT = Font(bold=True, color="FFFFFF")

STATUS_FILLS = {"PASS": PASS_FILL, "FAIL": FAIL_FILL, "WARN": WARN_FILL}
