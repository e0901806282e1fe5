"""Dataset preparation geometry: mask measurement, scale normalization,
bottom-anchored compositing, ordered pair expansion, and curation filtering.

Input corpora arrive as triplets — one identity photographed in up to
three body types (thin / fat / muscular) over a shared background. The
operations here make the members geometrically comparable (same subject
height, same ground anchor, same background) and expand each triplet into
ordered source→target training pairs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

MEMBER_LABELS = ("thin", "fat", "muscular")
REFERENCE_LABEL = "thin"

PAIR_ARROW = "→"  # the arrow inside pair ids, e.g. "id_004/thin→fat"


class DatasetError(Exception):
    pass


class EmptyMaskError(DatasetError):
    pass


class MissingMemberError(DatasetError):
    pass


class CurationError(DatasetError):
    pass


def _as_bool_mask(mask) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise DatasetError("mask must be a 2-D array")
    return mask.astype(bool)


@dataclass(frozen=True)
class MaskExtent:
    """Vertical span and ground anchor of a binary mask.

    ``bottom_center_col`` is the floor-midpoint of the occupied columns in
    the bottommost occupied row, which pins down "the bottom coordinates"
    even when the subject stands on two separated feet.
    """

    height_px: int
    bottom_row: int
    bottom_center_col: int


def mask_extent(mask) -> MaskExtent:
    """Measure a mask; raises EmptyMaskError when nothing is set."""
    mask = _as_bool_mask(mask)
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        raise EmptyMaskError("mask has no foreground pixels")
    top, bottom = int(rows[0]), int(rows[-1])
    cols = np.flatnonzero(mask[bottom])
    center = (int(cols[0]) + int(cols[-1])) // 2
    return MaskExtent(height_px=bottom - top + 1, bottom_row=bottom, bottom_center_col=center)


@dataclass
class Member:
    """One body-type variant of an identity: image + mask (or just paths
    when only bookkeeping-level work is needed)."""

    image: np.ndarray | None = None
    mask: np.ndarray | None = None
    image_path: str | None = None
    mask_path: str | None = None


@dataclass
class Triplet:
    identity: str
    members: dict[str, Member]
    background: np.ndarray | None = None
    background_path: str | None = None

    def validate(self) -> None:
        shape = None
        for label, member in self.members.items():
            if label not in MEMBER_LABELS:
                raise DatasetError(f"unknown member label {label!r}")
            if member.image is None:
                continue
            if shape is None:
                shape = member.image.shape[:2]
            elif member.image.shape[:2] != shape:
                raise DatasetError(f"member {label!r} image size differs from the rest")
            if member.mask is not None and member.mask.shape[:2] != member.image.shape[:2]:
                raise DatasetError(f"member {label!r} mask size differs from its image")
        if self.background is not None and shape is not None:
            if self.background.shape[:2] != shape:
                raise DatasetError("background size differs from member images")


def scale_to_reference(image, mask, ref_height_px: int):
    """Uniformly rescale an image/mask pair so the mask stands ref_height tall.

    One scale factor serves both axes (aspect ratio preserved exactly);
    images resample bilinearly, masks nearest-neighbor so they stay binary.
    The resulting mask height lands within ±1 px of the target because the
    subject's edges re-quantize to the new pixel grid.
    """
    mask = _as_bool_mask(mask)
    image = np.asarray(image)
    if int(ref_height_px) < 1:
        raise DatasetError("reference height must be at least 1 px")
    extent = mask_extent(mask)
    s = float(ref_height_px) / float(extent.height_px)
    if s == 1.0:
        return image.copy(), mask.copy()
    h, w = mask.shape
    new_w = max(1, round(w * s))
    new_h = max(1, round(h * s))
    image_out = cv2.resize(image, (new_w, new_h), interpolation=cv2.INTER_LINEAR)
    mask_out = cv2.resize(mask.astype(np.uint8), (new_w, new_h), interpolation=cv2.INTER_NEAREST)
    return image_out, mask_out.astype(bool)


@dataclass(frozen=True)
class CompositeResult:
    image: np.ndarray
    mask: np.ndarray
    clipped: bool  # some cutout pixels fell outside the canvas


def composite(background, cutout_image, cutout_mask, anchor: MaskExtent) -> CompositeResult:
    """Paste masked cutout pixels onto a background at the anchor.

    The cutout is translated so its own bottom row / bottom-center column
    land exactly on the anchor's. Pixels pushed outside the canvas are
    dropped and reported through ``clipped`` rather than raising — a
    scaled-up subject can legitimately poke past the frame.
    """
    background = np.asarray(background)
    cutout_image = np.asarray(cutout_image)
    cutout_mask = _as_bool_mask(cutout_mask)
    out = background.copy()
    canvas_mask = np.zeros(background.shape[:2], dtype=bool)

    if not cutout_mask.any():
        return CompositeResult(out, canvas_mask, clipped=False)

    ext = mask_extent(cutout_mask)
    dy = anchor.bottom_row - ext.bottom_row
    dx = anchor.bottom_center_col - ext.bottom_center_col

    ys, xs = np.nonzero(cutout_mask)
    ty = ys + dy
    tx = xs + dx
    h, w = background.shape[:2]
    valid = (ty >= 0) & (ty < h) & (tx >= 0) & (tx < w)
    clipped = bool(np.any(~valid))
    out[ty[valid], tx[valid]] = cutout_image[ys[valid], xs[valid]]
    canvas_mask[ty[valid], tx[valid]] = True
    return CompositeResult(out, canvas_mask, clipped=clipped)


def normalize_triplet(triplet: Triplet) -> Triplet:
    """Bring all members onto common scale, anchor, and background.

    The thin member is the reference and passes through untouched; every
    other member is rescaled to the thin mask's height and composited onto
    the shared background, feet planted on the thin member's anchor.
    """
    ref = triplet.members.get(REFERENCE_LABEL)
    if ref is None or ref.mask is None:
        raise MissingMemberError(f"normalize requires the {REFERENCE_LABEL!r} member")
    if triplet.background is None:
        raise MissingMemberError("normalize requires the shared background image")
    ref_extent = mask_extent(ref.mask)

    members: dict[str, Member] = {REFERENCE_LABEL: ref}
    for label, member in triplet.members.items():
        if label == REFERENCE_LABEL:
            continue
        if member.image is None or member.mask is None:
            raise MissingMemberError(f"member {label!r} has no pixels loaded")
        img, mask = scale_to_reference(member.image, member.mask, ref_extent.height_px)
        placed = composite(triplet.background, img, mask, ref_extent)
        members[label] = Member(image=placed.image, mask=placed.mask)

    return Triplet(
        identity=triplet.identity,
        members=members,
        background=triplet.background,
        background_path=triplet.background_path,
    )


# ---------------------------------------------------------------------------
# pair expansion and curation
# ---------------------------------------------------------------------------


@dataclass
class TransformationPair:
    """Ordered source→target edit example derived from one triplet."""

    identity: str
    source: str
    target: str
    source_member: Member
    target_member: Member
    keep: bool = True
    drop_reason: str | None = None

    @property
    def pair_id(self) -> str:
        return f"{self.identity}/{self.source}{PAIR_ARROW}{self.target}"


def enumerate_pairs(triplet: Triplet) -> list[TransformationPair]:
    """All ordered pairs of distinct present members: m members -> m(m-1)."""
    labels = [l for l in MEMBER_LABELS if l in triplet.members]
    if len(labels) < 2:
        raise DatasetError(
            f"triplet {triplet.identity!r} has {len(labels)} member(s); need at least 2"
        )
    pairs = []
    for src in labels:
        for dst in labels:
            if src == dst:
                continue
            pairs.append(
                TransformationPair(
                    identity=triplet.identity,
                    source=src,
                    target=dst,
                    source_member=triplet.members[src],
                    target_member=triplet.members[dst],
                )
            )
    return pairs


def apply_curation(pairs: list[TransformationPair], flags) -> tuple[list[TransformationPair], dict]:
    """Drop flagged pairs; returns (kept pairs, report).

    ``flags`` is an iterable of {"pair": id, "reason": str} records (see
    load_flags for the file form). Flagging an id that matches no pair is
    an error — silent typos would un-curate data.
    """
    by_id = {p.pair_id: p for p in pairs}
    reasons: dict[str, int] = {}
    for flag in flags:
        pid = flag["pair"]
        if pid not in by_id:
            raise CurationError(f"flag references unknown pair id {pid!r}")
        reason = flag.get("reason", "unspecified")
        pair = by_id[pid]
        pair.keep = False
        pair.drop_reason = reason
        reasons[reason] = reasons.get(reason, 0) + 1
    kept = [p for p in pairs if p.keep]
    report = {
        "input": len(pairs),
        "kept": len(kept),
        "dropped": len(pairs) - len(kept),
        "reasons": reasons,
    }
    return kept, report


# ---------------------------------------------------------------------------
# manifest and flags files (JSON lines)
# ---------------------------------------------------------------------------


def load_manifest(path: str | Path) -> list[dict]:
    """One triplet per line: {"identity", "background", "members": {label:
    {"image", "mask"}}} with paths relative to the manifest file."""
    entries = []
    for i, line in enumerate(Path(path).read_text().splitlines()):
        line = line.strip()
        if not line:
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"manifest line {i + 1} is not valid JSON: {exc}") from exc
        if "identity" not in entry or "members" not in entry:
            raise DatasetError(f"manifest line {i + 1} lacks identity/members")
        entries.append(entry)
    return entries


def load_flags(path: str | Path) -> list[dict]:
    """One flag per line: {"pair": id, "reason": str}."""
    flags = []
    for i, line in enumerate(Path(path).read_text().splitlines()):
        line = line.strip()
        if not line:
            continue
        try:
            flag = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"flags line {i + 1} is not valid JSON: {exc}") from exc
        if "pair" not in flag:
            raise DatasetError(f"flags line {i + 1} lacks a pair id")
        flags.append(flag)
    return flags


def load_triplet(entry: dict, base_dir: str | Path, with_pixels: bool = True) -> Triplet:
    """Materialize a manifest entry, optionally reading its images."""
    base = Path(base_dir)

    def read_image(rel):
        img = cv2.imread(str(base / rel), cv2.IMREAD_UNCHANGED)
        if img is None:
            raise DatasetError(f"could not read image {rel!r}")
        return img

    members = {}
    for label, paths in entry["members"].items():
        member = Member(image_path=paths.get("image"), mask_path=paths.get("mask"))
        if with_pixels:
            member.image = read_image(paths["image"])
            member.mask = read_image(paths["mask"]).astype(bool)
        members[label] = member

    background = None
    if with_pixels and entry.get("background"):
        background = read_image(entry["background"])

    triplet = Triplet(
        identity=str(entry["identity"]),
        members=members,
        background=background,
        background_path=entry.get("background"),
    )
    if with_pixels:
        triplet.validate()
    return triplet
