"""Small shared helpers for the pipeline's CSV artifacts."""


class SchemaError(ValueError):
    """CSV header or shape does not match the expected schema."""


def fmt(x, digits=9):
    return f"{float(x):.{digits}g}"


def check_header(found, expected, path):
    if found != expected:
        raise SchemaError(
            f"{path}: expected header {expected!r}, found {found!r}")


def split_comments(lines):
    """Partition leading '#' comment lines from the rest."""
    comments = []
    body_start = 0
    for i, line in enumerate(lines):
        if line.startswith("#"):
            comments.append(line[1:].strip())
            body_start = i + 1
        else:
            break
    return comments, lines[body_start:]
