"""
Export of approximation reports, bench tables and sparsity maps.
"""

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Sequence

import numpy as np
import pandas as pd
import yaml
from openpyxl import Workbook
from openpyxl.styles import Alignment, Font, PatternFill
from openpyxl.utils.dataframe import dataframe_to_rows
from PIL import Image

EXPORT_FORMATS = ('json', 'yaml', 'csv', 'excel', 'markdown')
FORMAT_SUFFIXES = {
    'json': '.json',
    'yaml': '.yaml',
    'csv': '.csv',
    'excel': '.xlsx',
    'markdown': '.md',
}


class ResultExporter:
    """Write run results to one or more file formats.

    ``data`` holds a ``summary`` mapping and optionally ``rows`` (a list of
    flat records) with their fixed ``columns``.
    """

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def export(self, data: Dict[str, Any], output_path: Path, formats: Sequence[str],
               metadata: Dict[str, Any] = None) -> List[Path]:
        """Export ``data`` next to ``output_path`` once per requested format.

        Returns the files written; unknown formats are skipped with a warning.
        """
        output_path = Path(output_path)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        export_data = {
            'metadata': metadata or {},
            'generated': datetime.now().isoformat(),
            'summary': data.get('summary', {}),
            'rows': data.get('rows', []),
            'columns': list(data.get('columns') or _columns(data.get('rows', []))),
        }

        written = []
        for format_type in formats:
            if format_type not in FORMAT_SUFFIXES:
                self.logger.warning(f"Unknown format: {format_type}")
                continue
            target = _with_suffix(output_path, FORMAT_SUFFIXES[format_type])
            try:
                getattr(self, f"_export_{format_type}")(export_data, target)
            except Exception as e:
                self.logger.error(f"Error exporting to {format_type}: {e}")
                raise
            written.append(target)
        return written

    def _export_json(self, data: Dict[str, Any], output_path: Path):
        payload = {k: v for k, v in data.items() if k != 'columns'}
        with open(output_path, 'w', encoding='utf-8') as f:
            json.dump(payload, f, ensure_ascii=False, indent=2)
        self.logger.info(f"Exported JSON: {output_path}")

    def _export_yaml(self, data: Dict[str, Any], output_path: Path):
        payload = {k: v for k, v in data.items() if k != 'columns'}
        with open(output_path, 'w', encoding='utf-8') as f:
            yaml.safe_dump(payload, f, allow_unicode=True, default_flow_style=False, sort_keys=False)
        self.logger.info(f"Exported YAML: {output_path}")

    def _export_csv(self, data: Dict[str, Any], output_path: Path):
        frame = pd.DataFrame(data['rows'], columns=data['columns'])
        frame.to_csv(output_path, index=False)
        self.logger.info(f"Exported CSV: {output_path}")

    def _export_excel(self, data: Dict[str, Any], output_path: Path):
        wb = Workbook()
        ws = wb.active
        ws.title = "Results"

        header_font = Font(bold=True, size=12)
        header_fill = PatternFill(start_color="366092", end_color="366092", fill_type="solid")
        header_alignment = Alignment(horizontal="center", vertical="center")

        frame = pd.DataFrame(data['rows'], columns=data['columns'])
        for row in dataframe_to_rows(frame, index=False, header=True):
            ws.append([_cell(v) for v in row])
        for cell in ws[1]:
            cell.font = header_font
            cell.fill = header_fill
            cell.alignment = header_alignment
        for column in ws.columns:
            ws.column_dimensions[column[0].column_letter].width = max(12, len(str(column[0].value)) + 2)

        ws2 = wb.create_sheet(title="Summary")
        ws2['A1'] = "Property"
        ws2['B1'] = "Value"
        ws2['A1'].font = header_font
        ws2['B1'].font = header_font
        row = 2
        for key, value in list(data['summary'].items()) + list(data['metadata'].items()):
            ws2[f'A{row}'] = key
            ws2[f'B{row}'] = str(value)
            row += 1
        ws2[f'A{row}'] = "Generated"
        ws2[f'B{row}'] = data['generated']
        ws2.column_dimensions['A'].width = 25
        ws2.column_dimensions['B'].width = 60

        wb.save(output_path)
        self.logger.info(f"Exported Excel: {output_path}")

    def _export_markdown(self, data: Dict[str, Any], output_path: Path):
        lines = ["# Sparse Approximation Report", ""]

        if data['metadata']:
            lines.append("## Run")
            for key, value in data['metadata'].items():
                lines.append(f"- **{key}**: {value}")
            lines.append("")

        if data['summary']:
            lines.append("## Summary")
            for key, value in data['summary'].items():
                lines.append(f"- **{key}**: {_short(value)}")
            lines.append("")

        if data['columns']:
            lines.append("## Results")
            lines.append("")
            lines.append("| " + " | ".join(data['columns']) + " |")
            lines.append("|" + "---|" * len(data['columns']))
            for record in data['rows']:
                lines.append("| " + " | ".join(_short(record.get(c, '')) for c in data['columns']) + " |")
            lines.append("")

        lines.append(f"**Generated**: {data['generated']}")
        with open(output_path, 'w', encoding='utf-8') as f:
            f.write('\n'.join(lines) + '\n')
        self.logger.info(f"Exported Markdown: {output_path}")

    def export_kq_grid(self, grid: np.ndarray, output_path: Path, png: bool = False) -> List[Path]:
        """Write the Qx x Qy atoms-per-block map as CSV and optionally as a grey-level PNG."""
        output_path = Path(output_path)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        csv_path = _with_suffix(output_path, '.csv')
        pd.DataFrame(grid).to_csv(csv_path, header=False, index=False)
        written = [csv_path]
        self.logger.info(f"Exported k_q grid {grid.shape[0]}x{grid.shape[1]}: {csv_path}")

        if png:
            png_path = _with_suffix(output_path, '.png')
            peak = float(grid.max()) if grid.size else 0.0
            scaled = np.zeros(grid.shape) if peak == 0 else grid / peak
            Image.fromarray(np.rint(255 * scaled).astype(np.uint8), mode='L').save(png_path)
            written.append(png_path)
            self.logger.info(f"Exported k_q heat map: {png_path}")
        return written


def _with_suffix(path: Path, suffix: str) -> Path:
    # Base names may contain dots ("scene.v2_report").
    return path.with_name(path.name + suffix)


def _columns(rows: List[Dict[str, Any]]) -> List[str]:
    columns: List[str] = []
    for record in rows:
        for key in record:
            if key not in columns:
                columns.append(key)
    return columns


def _cell(value: Any) -> Any:
    if isinstance(value, (list, tuple, dict)):
        return json.dumps(value)
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def _short(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.4g}"
    if isinstance(value, (list, tuple)) and len(value) > 12:
        return f"[{len(value)} values]"
    return str(value)
