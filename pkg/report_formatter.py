# report_formatter.py
"""Summary tables over DD solve reports and convergence-study tables."""

import logging

import numpy as np
import pandas as pd

logger = logging.getLogger('DD-Report')

SUMMARY_COLUMNS = ['source', 'count', 'J', 'tol_J', 'classification', 'iterations',
                   'delta_gap', 'curl_residual', 'div_residual', 'history_monotone', 'J_nonincreasing']


def _report_row(source, report):
    try:
        diagnostics = report.get('diagnostics', {})
        return {
            'source': source,
            'count': report.get('data', {}).get('size', np.nan),
            'J': float(report['J_history'][-1]),
            'tol_J': float(report['tol_J']),
            'classification': report['classification'],
            'iterations': int(report['iterations']),
            'delta_gap': diagnostics.get('delta_gap', np.nan),
            'curl_residual': diagnostics.get('curl_residual', np.nan),
            'div_residual': diagnostics.get('div_residual', np.nan),
            'history_monotone': bool(report.get('J_nonincreasing', True)),
        }
    except (KeyError, IndexError, TypeError, ValueError) as e:
        raise ValueError(f"{source}: not a DD report ({e})")


def _study_rows(source, frame):
    missing = {'count', 'J', 'classification'} - set(frame.columns)
    if missing:
        raise ValueError(f"{source}: study table lacks columns {sorted(missing)}")
    rows = []
    for _, row in frame.iterrows():
        rows.append({
            'source': f"{source}#{int(row['count'])}",
            'count': int(row['count']),
            'J': float(row['J']),
            'tol_J': np.nan,
            'classification': row['classification'],
            'iterations': int(row.get('iterations', 0)),
            'delta_gap': row.get('delta_gap', np.nan),
            'curl_residual': row.get('curl_residual', np.nan),
            'div_residual': row.get('div_residual', np.nan),
            'history_monotone': True,
        })
    return rows


def summarize(inputs):
    """
    Build the summary table.

    Parameters:
    -----------
    inputs : list of (source, content)
        content is a report dict (solve-dd output) or a DataFrame (study table)

    Returns:
    --------
    pandas.DataFrame
        Rows sorted by data count; J_nonincreasing flags rows whose J does
        not exceed the previous row's
    """
    if not inputs:
        raise ValueError("no report files given")
    rows = []
    for source, content in inputs:
        if isinstance(content, pd.DataFrame):
            rows.extend(_study_rows(source, content))
        elif isinstance(content, dict):
            rows.append(_report_row(source, content))
        else:
            raise ValueError(f"{source}: unsupported report content")

    table = pd.DataFrame(rows)
    table = table.sort_values('count', kind='mergesort', na_position='last').reset_index(drop=True)
    previous = table['J'].shift(1)
    table['J_nonincreasing'] = previous.isna() | (table['J'] <= previous)
    logger.info(f"Summarized {len(table)} runs")
    return table[SUMMARY_COLUMNS]


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return 'yes' if value else 'NO'
    if isinstance(value, (float, np.floating)):
        if np.isnan(value):
            return '-'
        return f"{value:.6g}"
    return str(value)


def format_markdown(table):
    header = '| ' + ' | '.join(table.columns) + ' |'
    rule = '|' + '|'.join('---' for _ in table.columns) + '|'
    lines = [header, rule]
    for _, row in table.iterrows():
        lines.append('| ' + ' | '.join(_cell(row[c]) for c in table.columns) + ' |')
    return '\n'.join(lines) + '\n'
