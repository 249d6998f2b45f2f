import logging

from openpyxl import Workbook

from utils.colors import HEADER_FILL, HEADER_FONT, STATUS_FILLS

GATE_COLUMNS = ("stage", "gate", "status", "measured", "limit", "detail")


def gate_rows(certificate: dict) -> list[dict]:
    """Flatten the gates of every stage, in stage order."""
    rows = []
    for stage in certificate.get("stage_order", sorted(certificate.get("stages", {}))):
        report = certificate["stages"].get(stage, {})
        for gate in report.get("gates", []):
            rows.append({"stage": stage, **gate})
    return rows


def summary_lines(certificate: dict) -> list[str]:
    status = "PASS" if certificate.get("passed") else "FAIL"
    lines = [
        f"Certificate {certificate.get('config_hash', '?')[:12]} (version {certificate.get('version', '?')}): {status}",
        f"Scenario: {certificate.get('config', {}).get('scenario', {}).get('id', '?')}",
    ]
    for row in gate_rows(certificate):
        measured = row.get("measured")
        limit = row.get("limit")
        numbers = ""
        if measured is not None:
            numbers = f" measured={measured:.6g}" if isinstance(measured, (int, float)) else f" measured={measured}"
        if limit is not None:
            numbers += f" limit={limit:.6g}" if isinstance(limit, (int, float)) else f" limit={limit}"
        lines.append(f"  [{row['status']}] {row['gate']}{numbers}")
    return lines


def write_summary_workbook(certificate: dict, path: str) -> str:
    """One row per gate, filled green/red/yellow by status."""
    logger = logging.getLogger(__name__)
    wb = Workbook()
    ws = wb.active
    ws.title = "Gates"
    ws.append(list(GATE_COLUMNS))
    for col in range(1, len(GATE_COLUMNS) + 1):
        ws.cell(row=1, column=col).fill = HEADER_FILL
        ws.cell(row=1, column=col).font = HEADER_FONT

    counts = {"PASS": 0, "FAIL": 0, "WARN": 0}
    for row in gate_rows(certificate):
        ws.append([row.get(c) if not isinstance(row.get(c), (list, dict)) else str(row.get(c)) for c in GATE_COLUMNS])
        fill = STATUS_FILLS.get(row["status"])
        if fill is not None:
            for col in range(1, len(GATE_COLUMNS) + 1):
                ws.cell(row=ws.max_row, column=col).fill = fill
        counts[row["status"]] = counts.get(row["status"], 0) + 1

    info = wb.create_sheet("Run")
    info.append(["key", "value"])
    info.append(["config_hash", certificate.get("config_hash")])
    info.append(["version", certificate.get("version")])
    info.append(["passed", bool(certificate.get("passed"))])
    wb.save(path)
    logger.info("Summary workbook %s: PASS=%d FAIL=%d WARN=%d", path, counts["PASS"], counts["FAIL"], counts["WARN"])
    return path
