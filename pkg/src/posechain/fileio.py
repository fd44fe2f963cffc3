"""Self-describing JSON documents for poses, angles, body configs and reports.

Every document is a JSON object whose ``schema`` field names its kind and
version. Writers emit one canonical layout (objects one key per line, flat
lists of scalars on a single line, floats in shortest round-trip form), so
reading a canonical file and writing it back reproduces it byte for byte.
Readers reject NaN and infinities and report offending values by file, line
and frame.
"""
import hashlib
import json
import re
from dataclasses import dataclass, field

import numpy as np

from .bodymodel import body_from_dict
from .errors import PoseChainError, ValidationError
from .losses import PoseSequence

SCHEMAS = {
    "poses": "posechain/poses@1",
    "angles": "posechain/angles@1",
    "body": "posechain/body@1",
    "report": "posechain/report@1",
}


# -- canonical emission ------------------------------------------------------

def _scalar(x):
    return x is None or isinstance(x, (bool, int, float, str))


def _emit(obj, depth):
    pad = "  " * (depth + 1)
    end = "  " * depth
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_emit(v, depth + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if all(_scalar(x) for x in obj):
            return "[" + ", ".join(_emit(x, depth) for x in obj) + "]"
        return "[\n" + ",\n".join(pad + _emit(x, depth + 1) for x in obj) + "\n" + end + "]"
    if isinstance(obj, np.ndarray):
        return _emit(obj.tolist(), depth)
    if isinstance(obj, np.generic):
        return _emit(obj.item(), depth)
    try:
        return json.dumps(obj, allow_nan=False)
    except ValueError:
        raise ValidationError(f"cannot write non-finite value {obj!r}") from None


def dumps(doc):
    """Canonical text of a JSON-compatible document, newline terminated."""
    return _emit(doc, 0) + "\n"


def write_document(path, doc):
    text = dumps(doc)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return text


# -- parsing -----------------------------------------------------------------

class _NonFinite(Exception):
    pass


def _reject_constant(name):
    raise _NonFinite(name)


def _line_of(text, pos):
    return text.count("\n", 0, pos) + 1


def loads(text, source="<string>", kind=None):
    """Parse a document, checking its ``schema`` field when ``kind`` is given."""
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ValidationError(exc.msg, location=f"{source}:{exc.lineno}:{exc.colno}") from None
    except _NonFinite as exc:
        m = re.search(r'(?<![\w"])' + re.escape(str(exc)) + r'(?![\w"])', text)
        line = _line_of(text, m.start()) if m else "?"
        raise ValidationError(f"non-finite value {exc}", location=f"{source}:{line}") from None
    if not isinstance(doc, dict):
        raise ValidationError("document must be a JSON object", location=f"{source}:1")
    if kind is not None and doc.get("schema") != SCHEMAS[kind]:
        raise ValidationError(
            f"expected schema {SCHEMAS[kind]!r}, found {doc.get('schema')!r}", location=f"{source}:1")
    return doc


def read_document(path, kind=None):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return loads(text, str(path), kind), text


class _Locator:
    """Maps ``frames[k]`` of a parsed document back to a line of its text."""

    def __init__(self, text, source):
        self.text = text
        self.source = source
        self._starts = None

    def _scan(self):
        starts = []
        m = re.search(r'"frames"\s*:\s*\[', self.text or "")
        if m:
            dec = json.JSONDecoder(parse_constant=_reject_constant)
            ws = re.compile(r"[\s,]*")
            pos = ws.match(self.text, m.end()).end()
            try:
                while pos < len(self.text) and self.text[pos] != "]":
                    starts.append(pos)
                    _, pos = dec.raw_decode(self.text, pos)
                    pos = ws.match(self.text, pos).end()
            except (ValueError, _NonFinite):
                pass
        self._starts = starts

    def frame(self, k, detail=None):
        if self._starts is None:
            self._scan()
        where = f"{self.source}:{_line_of(self.text, self._starts[k])}" \
            if k < len(self._starts) else self.source
        where += f", frame {k}"
        return where + (f", {detail}" if detail else "")

    def field(self, name):
        m = re.search(r'"' + re.escape(name) + r'"\s*:', self.text or "")
        return f"{self.source}:{_line_of(self.text, m.start())}" if m else self.source


def _number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _require(doc, key, loc):
    if key not in doc:
        raise ValidationError(f"missing field {key!r}", location=loc.source)
    return doc[key]


# -- poses -------------------------------------------------------------------

def poses_to_doc(seq):
    return {
        "schema": SCHEMAS["poses"],
        "fps": seq.fps,
        "keypoints": list(seq.keypoints),
        "frames": [{k: [float(c) for c in p] for k, p in zip(seq.keypoints, frame)}
                   for frame in seq.positions],
    }


def poses_from_doc(doc, text=None, source="<poses>"):
    loc = _Locator(text, source)
    names = _require(doc, "keypoints", loc)
    if not isinstance(names, list) or not names or not all(isinstance(n, str) for n in names):
        raise ValidationError("keypoints must be a non-empty list of names", loc.field("keypoints"))
    if len(set(names)) != len(names):
        raise ValidationError("duplicate keypoint names", loc.field("keypoints"))
    fps = doc.get("fps")
    if fps is not None and not (_number(fps) and np.isfinite(fps) and fps > 0):
        raise ValidationError(f"fps must be a positive number or null, got {fps!r}", loc.field("fps"))
    frames = _require(doc, "frames", loc)
    if not isinstance(frames, list) or not frames:
        raise ValidationError("frames must be a non-empty list", loc.field("frames"))
    out = np.empty((len(frames), len(names), 3))
    for f, frame in enumerate(frames):
        if not isinstance(frame, dict):
            raise ValidationError("frame must map keypoint names to [x, y, z]", loc.frame(f))
        for k, name in enumerate(names):
            if name not in frame:
                raise ValidationError(f"missing keypoint {name!r}", loc.frame(f))
            p = frame[name]
            if not (isinstance(p, list) and len(p) == 3 and all(_number(c) for c in p)):
                raise ValidationError("expected three numbers", loc.frame(f, f"keypoint {name!r}"))
            if not all(np.isfinite(c) for c in p):
                raise ValidationError("non-finite coordinate", loc.frame(f, f"keypoint {name!r}"))
            out[f, k] = p
        extra = [n for n in frame if n not in names]
        if extra:
            raise ValidationError(f"undeclared keypoint {extra[0]!r}", loc.frame(f))
    return PoseSequence(tuple(names), out, None if fps is None else float(fps))


def write_poses(path, seq):
    return write_document(path, poses_to_doc(seq))


def read_poses(path):
    doc, text = read_document(path, "poses")
    return poses_from_doc(doc, text, str(path))


# -- angles ------------------------------------------------------------------

PROVENANCE_KEYS = ("body_sha256", "algorithm", "lambda", "M", "seed")


@dataclass
class AngleSequence:
    """Parameter vectors ``(F, P)`` in radians with their names and origin."""
    parameters: tuple
    thetas: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.parameters = tuple(self.parameters)
        self.thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        if self.thetas.shape[1] != len(self.parameters):
            raise ValidationError(
                f"rows have {self.thetas.shape[1]} values, header names {len(self.parameters)}")
        prov = {k: None for k in PROVENANCE_KEYS}
        prov.update(self.provenance)
        self.provenance = prov

    def check_body(self, body, source="<angles>", text=None):
        """Row length and box bounds against ``body``."""
        loc = _Locator(text, source)
        if tuple(body.param_names) != self.parameters:
            raise ValidationError("parameter names do not match the body model",
                                  loc.field("parameters"))
        b = body.bounds()
        bad = np.argwhere((self.thetas < b[:, 0]) | (self.thetas > b[:, 1]))
        if len(bad):
            f, p = bad[0]
            raise ValidationError(
                f"{self.parameters[p]} = {float(self.thetas[f, p])!r} outside "
                f"[{float(b[p, 0])!r}, {float(b[p, 1])!r}]",
                loc.frame(int(f)))
        want = body_hash(body)
        have = self.provenance.get("body_sha256")
        if have is not None and have != want:
            raise ValidationError("angles were produced for a different body config",
                                  loc.field("body_sha256"))


def angles_to_doc(ang):
    return {
        "schema": SCHEMAS["angles"],
        "parameters": list(ang.parameters),
        "provenance": dict(ang.provenance),
        "frames": [[float(x) for x in row] for row in ang.thetas],
    }


def angles_from_doc(doc, text=None, source="<angles>"):
    loc = _Locator(text, source)
    names = _require(doc, "parameters", loc)
    if not isinstance(names, list) or not names or not all(isinstance(n, str) for n in names):
        raise ValidationError("parameters must be a non-empty list of names", loc.field("parameters"))
    prov = doc.get("provenance") or {}
    if not isinstance(prov, dict):
        raise ValidationError("provenance must be an object", loc.field("provenance"))
    rows = _require(doc, "frames", loc)
    if not isinstance(rows, list) or not rows:
        raise ValidationError("frames must be a non-empty list", loc.field("frames"))
    for f, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != len(names):
            n = len(row) if isinstance(row, list) else "no"
            raise ValidationError(f"row has {n} values, expected {len(names)}", loc.frame(f))
        for p, x in enumerate(row):
            if not _number(x):
                raise ValidationError(f"{names[p]} is not a number", loc.frame(f))
            if not np.isfinite(x):
                raise ValidationError(f"{names[p]} is not finite", loc.frame(f))
    return AngleSequence(tuple(names), np.array(rows, dtype=float), prov)


def write_angles(path, ang):
    return write_document(path, angles_to_doc(ang))


def read_angles(path, body=None):
    doc, text = read_document(path, "angles")
    ang = angles_from_doc(doc, text, str(path))
    if body is not None:
        ang.check_body(body, str(path), text)
    return ang


# -- body configs ------------------------------------------------------------

def body_to_doc(body):
    return {"schema": SCHEMAS["body"], **body.describe()}


def body_hash(body):
    """SHA-256 of the canonical body document."""
    return hashlib.sha256(dumps(body_to_doc(body)).encode()).hexdigest()


def body_from_doc(doc, source="<body>"):
    try:
        return body_from_dict(doc)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed body config ({exc!r})", location=source) from None
    except PoseChainError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(str(exc), location=source) from None


def write_body(path, body):
    return write_document(path, body_to_doc(body))


def read_body(path):
    doc, _ = read_document(path, "body")
    return body_from_doc(doc, str(path))


# -- reports -----------------------------------------------------------------

def report_to_doc(payload):
    return {"schema": SCHEMAS["report"], **payload}


def write_report(path, payload):
    return write_document(path, report_to_doc(payload))


def read_report(path):
    return read_document(path, "report")[0]
