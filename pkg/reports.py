"""
Sweep report emission: CSV and JSON rows, and a PDF summary
"""
import dataclasses
import io
import json
import logging
from datetime import datetime

import pandas as pd
from reportlab.lib.colors import black, lightgrey, white
from reportlab.lib.enums import TA_CENTER
from reportlab.lib.pagesizes import A4, landscape
from reportlab.lib.styles import getSampleStyleSheet, ParagraphStyle
from reportlab.lib.units import inch
from reportlab.platypus import SimpleDocTemplate, Paragraph, Spacer, Table, TableStyle

logger = logging.getLogger(__name__)

FORMATS = ('csv', 'json')
RUNTIME_COLUMN = 'runtime_s'

# Columns shown in the PDF summary table
SUMMARY_COLUMNS = [
    ('strategy', 'Strategy'),
    ('policy', 'Policy'),
    ('placement', 'Placement'),
    ('aging_max', 'Max aging'),
    ('norm_aging_max', 'Norm. max'),
    ('aging_sched_max', 'Sched. max'),
    ('log_reliability_min', 'Min log R'),
    ('isi_mean_ms', 'Mean ISI'),
    ('isi_change_mean', 'ISI change'),
    ('cut_spikes', 'Cut spikes'),
]


def _as_dict(row):
    if dataclasses.is_dataclass(row):
        return dataclasses.asdict(row)
    return dict(row)


def rows_frame(rows, include_runtime=True):
    """Rows as a DataFrame in their declared column order"""
    records = [_as_dict(r) for r in rows]
    frame = pd.DataFrame.from_records(records, columns=list(records[0]))
    if not include_runtime and RUNTIME_COLUMN in frame.columns:
        frame = frame.drop(columns=[RUNTIME_COLUMN])
    return frame


def emit_report(rows, fmt, path, include_runtime=True):
    """Write rows as CSV (header + one line per row) or as a JSON array of flat objects"""
    if not rows:
        raise ValueError('cannot emit an empty report')
    if fmt not in FORMATS:
        raise ValueError(f'unknown report format {fmt!r}; choose from {FORMATS}')

    frame = rows_frame(rows, include_runtime)
    if fmt == 'csv':
        frame.to_csv(path, index=False, float_format='%.17g', lineterminator='\n')
    else:
        records = [{k: r[k] for k in frame.columns} for r in map(_as_dict, rows)]
        with open(path, 'w', encoding='utf-8') as handle:
            json.dump(records, handle, indent=2, allow_nan=False)
            handle.write('\n')
    logger.info('Wrote %d report rows to %s (%s)', len(frame), path, fmt)


def read_report(path, fmt, types=None):
    """Read a report back as a list of dicts; `types` maps column name to a converter"""
    if fmt == 'csv':
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
        records = frame.to_dict(orient='records')
    elif fmt == 'json':
        with open(path, encoding='utf-8') as handle:
            records = json.load(handle)
    else:
        raise ValueError(f'unknown report format {fmt!r}; choose from {FORMATS}')

    if types:
        records = [{k: types[k](v) if k in types else v for k, v in r.items()} for r in records]
    return records


def rows_to_csv_text(rows, include_runtime=True):
    buffer = io.StringIO()
    rows_frame(rows, include_runtime).to_csv(buffer, index=False, float_format='%.17g', lineterminator='\n')
    return buffer.getvalue()


def _cell(value):
    if isinstance(value, float):
        return f'{value:.4g}'
    return str(value)


def render_sweep_pdf(rows, title='Charge pump aging sweep', meta=None):
    """Render a sweep summary PDF and return its bytes"""
    buffer = io.BytesIO()
    doc = SimpleDocTemplate(buffer, pagesize=landscape(A4), rightMargin=36, leftMargin=36,
                            topMargin=36, bottomMargin=36)
    styles = getSampleStyleSheet()
    story = []

    title_style = ParagraphStyle(
        'SweepTitle',
        parent=styles['Heading1'],
        fontSize=20,
        spaceAfter=18,
        alignment=TA_CENTER,
        textColor=black
    )
    story.append(Paragraph(title, title_style))

    info = [['Generated', datetime.now().strftime('%Y-%m-%d %H:%M')],
            ['Rows', str(len(rows))]]
    for key, value in (meta or {}).items():
        info.append([str(key), str(value)])
    info_table = Table(info, colWidths=[2 * inch, 4 * inch])
    info_table.setStyle(TableStyle([
        ('FONTNAME', (0, 0), (0, -1), 'Helvetica-Bold'),
        ('FONTSIZE', (0, 0), (-1, -1), 10),
        ('BOTTOMPADDING', (0, 0), (-1, -1), 6),
    ]))
    story.append(info_table)
    story.append(Spacer(1, 0.3 * inch))

    data = [[label for _, label in SUMMARY_COLUMNS]]
    for row in map(_as_dict, rows):
        data.append([_cell(row.get(key, '')) for key, _ in SUMMARY_COLUMNS])
    table = Table(data, repeatRows=1)
    table.setStyle(TableStyle([
        ('BACKGROUND', (0, 0), (-1, 0), black),
        ('TEXTCOLOR', (0, 0), (-1, 0), white),
        ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
        ('FONTSIZE', (0, 0), (-1, -1), 8),
        ('ALIGN', (4, 1), (-1, -1), 'RIGHT'),
        ('ROWBACKGROUNDS', (0, 1), (-1, -1), [white, lightgrey]),
        ('GRID', (0, 0), (-1, -1), 0.5, black),
    ]))
    story.append(table)

    doc.build(story)
    buffer.seek(0)
    return buffer.getvalue()
