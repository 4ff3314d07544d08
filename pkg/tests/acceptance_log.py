"""Outcome lines of the acceptance criteria, printed at the end of the run."""

LINES = []


def record(number, title, ok, detail):
    line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
    LINES.append(line)
    print(line)
    return ok
