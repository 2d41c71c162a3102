"""Delimited text records for training metrics, cost reports, and
reproduced tables.

Everything is tab-separated with a header line. Floats are printed with
17 significant digits so 64-bit values survive a write/read round trip
exactly; the metrics writer flushes after every record so an
interrupted run keeps all completed epochs.
"""

from __future__ import annotations

from pathlib import Path

from .network import EpochRecord

METRICS_FIELDS = ("epoch", "train_loss", "train_top1", "test_top1",
                  "wall_seconds")


def _fmt(value: float) -> str:
    return "%.17g" % value


class MetricsWriter:
    """Appends one record per epoch, flushed as soon as it is written."""

    def __init__(self, path):
        self.path = Path(path)
        self._f = open(self.path, "w")
        self._f.write("\t".join(METRICS_FIELDS) + "\n")
        self._f.flush()

    def write_record(self, rec: EpochRecord):
        line = "\t".join([str(rec.epoch), _fmt(rec.train_loss),
                          _fmt(rec.train_top1), _fmt(rec.test_top1),
                          _fmt(rec.wall_seconds)])
        self._f.write(line + "\n")
        self._f.flush()

    def close(self):
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_metrics(records, path):
    with MetricsWriter(path) as w:
        for rec in records:
            w.write_record(rec)


def read_metrics(path) -> list:
    """Parse a metrics file back into EpochRecord values.

    A malformed final line (a record cut off mid-write) is dropped;
    malformed interior lines raise.
    """
    lines = Path(path).read_text().splitlines()
    if not lines or tuple(lines[0].split("\t")) != METRICS_FIELDS:
        raise ValueError(f"{path}: missing metrics header")
    records = []
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        try:
            rec = EpochRecord(int(parts[0]), float(parts[1]), float(parts[2]),
                              float(parts[3]), float(parts[4]))
        except (ValueError, IndexError):
            if i == len(lines):
                break
            raise ValueError(f"{path}: malformed record on line {i}") from None
        records.append(rec)
    return records


def format_cost_report(report) -> str:
    lines = ["layer\tparams\tflops"]
    for lc in report.per_layer:
        lines.append(f"{lc.name}\t{lc.params}\t{lc.flops}")
    lines.append(f"total\t{report.total_params}\t"
                 f"{sum(lc.flops for lc in report.per_layer)}")
    lines.append(f"fc_block\t{report.fc_block_params}\t")
    if report.space_savings is not None:
        lines.append(f"space_savings_pct\t{_fmt(100.0 * report.space_savings)}\t"
                     f"vs {report.baseline}")
    return "\n".join(lines) + "\n"


def write_cost_report(report, path):
    Path(path).write_text(format_cost_report(report))


def format_table(rows) -> str:
    lines = ["row\tactivation\tcomputed_pct\treference_pct\tdelta_pp"]
    for row in rows:
        lines.append(f"{row.label}\t{row.activation}\t{_fmt(row.computed)}\t"
                     f"{_fmt(row.reference)}\t{_fmt(row.delta)}")
    return "\n".join(lines) + "\n"


def write_table(rows, path):
    Path(path).write_text(format_table(rows))
