"""Dataset manifests and the matrix CSV format.

Matrix files are plain text, UTF-8, LF line endings: the first line is
``rows,cols``, then one comma-separated line per row. Floats are written
with ``repr`` so a save/load round trip is bit identical.

A manifest is a JSON object::

    {
      "version": "1",
      "mode": "descriptor" | "coordinate",
      "images": [
        {"id": "img0", "feature_file": "f0.csv",
         "coord_file": "c0.csv",            # optional, for embedding
         "ground_truth": [4, 0, 17],        # optional slot -> column list
         "aspect_file": "a0.csv",           # optional, 1 x n_k, for --col
         "objectness_file": "o0.csv"},      # optional, 1 x n_k, for --col
        ...
      ]
    }

File paths are resolved relative to the manifest's directory.
"""

import json
import os

import numpy as np

from .bench import GroundTruth
from .core import COORDINATE, DESCRIPTOR, FeatureSet, PartialPermutation
from .embed import PointSet

FORMAT_VERSION = "1"


def save_matrix(path, m):
    """Write ``m`` in the matrix CSV format (bit round-trippable)."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("can only save 2-D matrices, got shape %s" % (m.shape,))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("%d,%d\n" % m.shape)
        for row in m:
            fh.write(",".join(repr(x) for x in row))
            fh.write("\n")


def load_matrix(path):
    """Read a matrix CSV; errors carry file, line and column positions."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError("%s: empty file" % path)
    header = lines[0].split(",")
    if len(header) != 2:
        raise ValueError('%s:1: header must be "rows,cols"' % path)
    try:
        rows, cols = int(header[0]), int(header[1])
    except ValueError:
        raise ValueError('%s:1: header must be two integers "rows,cols"' % path) from None
    if rows < 1 or cols < 1:
        raise ValueError("%s:1: matrix must be at least 1x1" % path)
    if len(lines) - 1 < rows:
        raise ValueError(
            "%s: expected %d data lines, found %d" % (path, rows, len(lines) - 1)
        )
    out = np.empty((rows, cols))
    for r in range(rows):
        fields = lines[1 + r].split(",")
        if len(fields) != cols:
            raise ValueError(
                "%s:%d: expected %d fields, found %d"
                % (path, r + 2, cols, len(fields))
            )
        for c, field in enumerate(fields):
            try:
                out[r, c] = float(field)
            except ValueError:
                raise ValueError(
                    "%s:%d: field %d is not a number: %r"
                    % (path, r + 2, c + 1, field)
                ) from None
    if not np.isfinite(out).all():
        raise ValueError("%s: matrix contains non-finite values" % path)
    return out


def load_manifest(path):
    """Parse and structurally validate a dataset manifest."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError("%s: invalid JSON: %s" % (path, exc)) from None
    if not isinstance(manifest, dict):
        raise ValueError("%s: manifest must be a JSON object" % path)
    mode = manifest.get("mode", DESCRIPTOR)
    if mode not in (DESCRIPTOR, COORDINATE):
        raise ValueError("%s: unknown mode %r" % (path, mode))
    images = manifest.get("images")
    if not isinstance(images, list) or not images:
        raise ValueError('%s: "images" must be a nonempty list' % path)
    for i, entry in enumerate(images):
        if not isinstance(entry, dict) or "feature_file" not in entry:
            raise ValueError(
                '%s: images[%d] must be an object with "feature_file"'
                % (path, i)
            )
    return manifest


def _resolve(manifest_path, rel):
    return os.path.join(os.path.dirname(os.path.abspath(manifest_path)), rel)


def load_dataset(manifest_path):
    """Load the feature sets (and ground truth, if present) of a manifest.

    Returns ``(sets, truth_or_None, mode)``. All feature files must agree
    on the feature dimension; ground truth must be present on either all
    images or none.
    """
    manifest = load_manifest(manifest_path)
    mode = manifest.get("mode", DESCRIPTOR)
    sets = []
    truths = []
    first_file = None
    for i, entry in enumerate(manifest["images"]):
        fpath = _resolve(manifest_path, entry["feature_file"])
        features = load_matrix(fpath)
        if first_file is None:
            first_file = fpath
        elif features.shape[0] != sets[0].dim:
            raise ValueError(
                "feature dimension mismatch: %s has %d rows but %s has %d"
                % (fpath, features.shape[0], first_file, sets[0].dim)
            )
        sets.append(FeatureSet(features, image_id=entry.get("id", i)))
        if "ground_truth" in entry:
            truths.append([int(s) for s in entry["ground_truth"]])
        else:
            truths.append(None)

    have = [t is not None for t in truths]
    if any(have) and not all(have):
        raise ValueError("ground_truth must be given for all images or none")
    truth = None
    if all(have):
        ppms = [
            PartialPermutation(fs.size, t2s) for fs, t2s in zip(sets, truths)
        ]
        n = ppms[0].n_targets
        if any(p.n_targets != n for p in ppms):
            raise ValueError("ground_truth lists differ in length")
        flags = [np.ones(n, dtype=bool) for _ in ppms]
        truth = GroundTruth(ppms, flags)
    return sets, truth, mode


def load_point_sets(manifest_path):
    """Load PointSets (coords + descriptors) for the embed command."""
    manifest = load_manifest(manifest_path)
    out = []
    for i, entry in enumerate(manifest["images"]):
        if "coord_file" not in entry:
            raise ValueError(
                "images[%d] (%r) lacks the coord_file needed for embedding"
                % (i, entry.get("id", i))
            )
        coords = load_matrix(_resolve(manifest_path, entry["coord_file"]))
        descriptors = load_matrix(_resolve(manifest_path, entry["feature_file"]))
        out.append(
            PointSet(coords, descriptors, image_id=entry.get("id", i))
        )
    return out


def load_box_metadata(manifest_path):
    """Load per-image aspect-ratio and objectness rows (1 x n_k each)."""
    manifest = load_manifest(manifest_path)
    aspects = []
    scores = []
    for i, entry in enumerate(manifest["images"]):
        missing = [
            key
            for key in ("aspect_file", "objectness_file")
            if key not in entry
        ]
        if missing:
            raise ValueError(
                "images[%d] (%r) lacks %s needed for the box-feature "
                "augmentation" % (i, entry.get("id", i), ", ".join(missing))
            )
        aspect = load_matrix(_resolve(manifest_path, entry["aspect_file"]))
        score = load_matrix(_resolve(manifest_path, entry["objectness_file"]))
        for name, row in (("aspect", aspect), ("objectness", score)):
            if row.shape[0] != 1:
                raise ValueError(
                    "images[%d]: %s file must be 1 x n_k, got %s"
                    % (i, name, (row.shape,))
                )
        aspects.append(aspect[0])
        scores.append(score[0])
    return aspects, scores


def save_report(path, report_dict):
    """Write a result file: JSON with a format_version stamp."""
    payload = {"format_version": FORMAT_VERSION}
    payload.update(report_dict)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
