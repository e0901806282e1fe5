"""Command-line interface.

Every command is a thin shell over the library modules; anything the
HTTP service can do is reachable here too (the ``project`` group talks
to a running service over HTTP).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__


@click.group()
@click.version_option(__version__)
def main():
    """Body-shape editing toolkit: models, maps, rendering, data, service."""


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


@main.group()
def model():
    """Inspect and create body-model containers."""


@model.command("inspect")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
def model_inspect(file):
    """Print dimensions and invariant-check results for a model file."""
    from .bodymodel import inspect_model

    click.echo(json.dumps(inspect_model(file), indent=2, sort_keys=True))


@model.command("make-test")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", default=0, show_default=True)
def model_make_test(out, seed):
    """Write the built-in synthetic test model to a container file."""
    from .bodymodel import make_test_model, save_model

    save_model(make_test_model(seed=seed), out)
    click.echo(f"wrote {out}")


# ---------------------------------------------------------------------------
# map
# ---------------------------------------------------------------------------


@main.group("map")
def map_group():
    """Fit and apply body-attribute maps."""


@map_group.command("fit")
@click.option("--samples", required=True, type=click.Path(exists=True, dir_okay=False),
              help='JSON: {"names": [...], "betas": [[...]], "attributes": [[...]]}')
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--ridge", default=1e-4, show_default=True)
def map_fit(samples, out, ridge):
    """Fit a linear attribute map from paired (beta, attributes) samples."""
    from .mapping import fit_attribute_map, save_map

    doc = json.loads(Path(samples).read_text())
    amap = fit_attribute_map(
        np.asarray(doc["betas"], dtype=np.float64),
        np.asarray(doc["attributes"], dtype=np.float64),
        names=tuple(doc["names"]),
        ridge=ridge,
    )
    save_map(amap, out)
    click.echo(f"fitted {len(amap.names)} attributes from {len(doc['betas'])} samples -> {out}")


def _parse_edits(tokens, current: dict) -> dict:
    """``name=+10``/``name=-3`` shift the current measurement; ``name=55``
    sets an absolute target."""
    edits = {}
    for token in tokens:
        name, eq, raw = token.partition("=")
        if not eq or not raw:
            raise click.BadParameter(f"expected name=value, got {token!r}")
        try:
            value = float(raw)
        except ValueError:
            raise click.BadParameter(f"{raw!r} is not a number in {token!r}")
        if raw[0] in "+-":
            if name not in current:
                raise click.BadParameter(f"unknown attribute {name!r}")
            value = current[name] + value
        edits[name] = value
    return edits


def _load_model_arg(path):
    from .bodymodel import load_model, make_test_model

    return load_model(path) if path else make_test_model(seed=0)


def _load_map_arg(path, body_model):
    from .mapping import load_map
    from .service import default_attribute_map

    return load_map(path) if path else default_attribute_map(body_model)


@map_group.command("apply")
@click.option("--beta", "beta_file", required=True, type=click.Path(exists=True, dir_okay=False),
              help="JSON file holding the current shape coefficients.")
@click.option("--edit", "edits", multiple=True, required=True,
              help="name=+10 (relative) or name=55 (absolute); repeatable.")
@click.option("--map", "map_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--model", "model_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), help="Write result JSON here instead of stdout.")
def map_apply(beta_file, edits, map_file, model_file, out):
    """Solve for new shape coefficients hitting the edited attribute targets."""
    from .mapping import attributes_to_beta, measure

    body_model = _load_model_arg(model_file)
    amap = _load_map_arg(map_file, body_model)
    beta = np.asarray(json.loads(Path(beta_file).read_text()), dtype=np.float64)
    current = measure(body_model, beta)
    targets = _parse_edits(edits, current)
    beta_new = attributes_to_beta(body_model, amap, beta, targets)
    result = json.dumps(
        {"beta": beta_new.tolist(), "attributes": measure(body_model, beta_new)},
        indent=2,
    )
    if out:
        Path(out).write_text(result)
        click.echo(f"wrote {out}")
    else:
        click.echo(result)


# ---------------------------------------------------------------------------
# render
# ---------------------------------------------------------------------------


@main.command("render")
@click.option("--model", "model_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--beta", "beta_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--theta", "theta_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--camera", "camera_arg", help="Camera JSON (inline or a file path); auto-framed if omitted.")
@click.option("--width", default=None, type=int)
@click.option("--height", default=None, type=int)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Conditioning PNG path.")
@click.option("--depth-out", type=click.Path(dir_okay=False), help="Optional 16-bit millimeter depth PNG.")
def render_cmd(model_file, beta_file, theta_file, camera_arg, width, height, out, depth_out):
    """Render the depth-conditioning image for a posed, shaped body."""
    from .bodymodel import skin
    from .render import (
        DEFAULT_HEIGHT,
        DEFAULT_WIDTH,
        Camera,
        depth_to_conditioning,
        frame_body_camera,
        render_depth,
        save_depth_png,
        save_gray_png,
    )

    body_model = _load_model_arg(model_file)
    beta = (
        np.asarray(json.loads(Path(beta_file).read_text()), dtype=np.float64)
        if beta_file
        else np.zeros(body_model.num_betas)
    )
    theta = (
        np.asarray(json.loads(Path(theta_file).read_text()), dtype=np.float64)
        if theta_file
        else np.zeros(3 * body_model.num_joints)
    )
    width = width or DEFAULT_WIDTH
    height = height or DEFAULT_HEIGHT
    mesh = skin(body_model, beta, theta)
    if camera_arg:
        try:
            doc = json.loads(camera_arg)
        except json.JSONDecodeError:
            doc = json.loads(Path(camera_arg).read_text())
        camera = Camera.from_dict(doc)
    else:
        camera = frame_body_camera(mesh, width, height)
    depth_map = render_depth(mesh, camera, width, height)
    save_gray_png(depth_to_conditioning(depth_map), out)
    click.echo(f"wrote {out} ({int(depth_map.foreground.sum())} foreground pixels)")
    if depth_out:
        save_depth_png(depth_map, depth_out)
        click.echo(f"wrote {depth_out}")


# ---------------------------------------------------------------------------
# attention self-check
# ---------------------------------------------------------------------------


@main.group()
def attn():
    """Attention-math utilities."""


@attn.command("selfcheck")
@click.option("--seed", default=0, show_default=True)
def attn_selfcheck(seed):
    """Verify the core attention identities and a short training run."""
    from .attention import (
        ToyDenoiser,
        attention,
        dual_cross_attention,
        make_training_batch,
        reference_self_attention,
        train_toy,
    )

    rng = np.random.default_rng(seed)
    failures = 0

    worst = 0.0
    for _ in range(20):
        z = rng.standard_normal((5, 8))
        worst = max(worst, float(np.max(np.abs(
            reference_self_attention(z, z) - attention(z, z, z)
        ))))
    failures += _report("duplicated-reference self-attention identity", worst <= 1e-9,
                        f"max deviation {worst:.2e}")

    z = rng.standard_normal((4, 8))
    text_kv = (rng.standard_normal((3, 8)), rng.standard_normal((3, 8)))
    image_kv = (rng.standard_normal((6, 8)), np.zeros((6, 8)))
    exact = np.array_equal(
        dual_cross_attention(z, text_kv, image_kv),
        attention(z, *text_kv),
    )
    failures += _report("zero-valued image stream reduces to text-only", exact, "exact")

    denoiser = ToyDenoiser(seed=seed)
    batch = make_training_batch(denoiser, n_samples=8, seed=seed)
    trace = train_toy(denoiser, batch, steps=40, lr=0.5)
    failures += _report("gradient descent reduces denoising loss", trace[-1] < trace[0],
                        f"{trace[0]:.4f} -> {trace[-1]:.4f}")

    if failures:
        raise SystemExit(1)


def _report(name: str, ok: bool, detail: str) -> int:
    click.echo(f"{'ok' if ok else 'FAIL'} - {name} ({detail})")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# dataset
# ---------------------------------------------------------------------------


@main.group()
def dataset():
    """Normalize triplet corpora and expand transformation pairs."""


@dataset.command("normalize")
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def dataset_normalize(manifest, out_dir):
    """Rescale and re-anchor every triplet onto its shared background."""
    import cv2

    from .dataset import load_manifest, load_triplet, normalize_triplet

    base = Path(manifest).parent
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = load_manifest(manifest)
    new_manifest = []
    for entry in entries:
        triplet = normalize_triplet(load_triplet(entry, base))
        tdir = out / triplet.identity
        tdir.mkdir(parents=True, exist_ok=True)
        members = {}
        for label, member in triplet.members.items():
            image_rel = f"{triplet.identity}/{label}.png"
            mask_rel = f"{triplet.identity}/{label}_mask.png"
            cv2.imwrite(str(out / image_rel), member.image)
            cv2.imwrite(str(out / mask_rel), member.mask.astype(np.uint8) * 255)
            members[label] = {"image": image_rel, "mask": mask_rel}
        background_rel = f"{triplet.identity}/background.png"
        cv2.imwrite(str(out / background_rel), triplet.background)
        new_manifest.append(
            {"identity": triplet.identity, "background": background_rel, "members": members}
        )
    manifest_path = out / "manifest.jsonl"
    manifest_path.write_text("".join(json.dumps(e) + "\n" for e in new_manifest))
    click.echo(f"normalized {len(new_manifest)} triplet(s) -> {manifest_path}")


@dataset.command("pairs")
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--flags", "flags_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def dataset_pairs(manifest, flags_file, out):
    """Expand ordered source→target pairs, applying curation flags."""
    from .dataset import apply_curation, enumerate_pairs, load_flags, load_manifest, load_triplet

    base = Path(manifest).parent
    pairs = []
    for entry in load_manifest(manifest):
        triplet = load_triplet(entry, base, with_pixels=False)
        pairs.extend(enumerate_pairs(triplet))
    flags = load_flags(flags_file) if flags_file else []
    kept, report = apply_curation(pairs, flags)
    with open(out, "w") as fh:
        for pair in kept:
            fh.write(
                json.dumps(
                    {
                        "pair": pair.pair_id,
                        "identity": pair.identity,
                        "source": pair.source,
                        "target": pair.target,
                        "source_image": pair.source_member.image_path,
                        "target_image": pair.target_member.image_path,
                    }
                )
                + "\n"
            )
    click.echo(json.dumps(report, sort_keys=True))


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


@main.group()
def bench():
    """Evaluation reports over prediction/ground-truth directories."""


@bench.command("run")
@click.option("--pred", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--gt", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--fits", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--lpips", "lpips_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--model", "model_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Report path; .json gets JSON, anything else the text table.")
def bench_run(pred, gt, fits, lpips_file, model_file, out):
    """Score generated images and shape fits against ground truth."""
    from .metrics import evaluate

    body_model = _load_model_arg(model_file)
    report = evaluate(pred, gt, fits, body_model, lpips_file=lpips_file)
    text = report.to_json() if out.endswith(".json") else report.to_text()
    Path(out).write_text(text)
    click.echo(report.to_text())
    click.echo(f"wrote {out}")


# ---------------------------------------------------------------------------
# servers
# ---------------------------------------------------------------------------


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--data-dir", type=click.Path(file_okay=False))
@click.option("--model", "model_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--map", "map_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--backend-url")
def serve(host, port, data_dir, model_file, map_file, backend_url):
    """Run the editing service (env vars fill any omitted option)."""
    import uvicorn

    from .service import create_app

    app = create_app(
        data_dir=data_dir,
        model_path=model_file,
        map_path=map_file,
        backend_url=backend_url,
    )
    uvicorn.run(app, host=host, port=port)


@main.command("backend-stub")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8500, show_default=True)
def backend_stub(host, port):
    """Run the loopback generation backend (tinted-conditioning stand-in)."""
    import uvicorn

    from .backend_stub import create_stub_app

    uvicorn.run(create_stub_app(), host=host, port=port)


# ---------------------------------------------------------------------------
# project: HTTP client mirroring the service endpoints
# ---------------------------------------------------------------------------


@main.group()
@click.option("--url", envvar="RESHAPEKIT_SERVICE_URL", default="http://127.0.0.1:8000",
              show_default=True, help="Base URL of a running editing service.")
@click.pass_context
def project(ctx, url):
    """Drive a running service: one subcommand per endpoint."""
    ctx.obj = url


def _client(ctx):
    import httpx

    return httpx.Client(base_url=ctx.obj, timeout=60.0)


def _echo_response(response):
    if response.status_code >= 400:
        click.echo(response.text, err=True)
        raise SystemExit(1)
    click.echo(json.dumps(response.json(), indent=2, sort_keys=True))


@project.command("create")
@click.option("--reference", required=True, type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def project_create(ctx, reference):
    with _client(ctx) as client:
        _echo_response(
            client.post(
                "/projects",
                files={"reference": (Path(reference).name, Path(reference).read_bytes(), "image/png")},
            )
        )


@project.command("fit")
@click.argument("project_id")
@click.option("--fit", "fit_file", required=True, type=click.Path(exists=True, dir_okay=False),
              help="JSON with beta, theta, camera, and optional image_size.")
@click.pass_context
def project_fit(ctx, project_id, fit_file):
    with _client(ctx) as client:
        _echo_response(
            client.post(
                f"/projects/{project_id}/fit",
                json=json.loads(Path(fit_file).read_text()),
            )
        )


@project.command("sliders")
@click.argument("project_id")
@click.option("--set", "edits", multiple=True, required=True,
              help="name=+10 (relative to current) or name=55 (absolute); repeatable.")
@click.pass_context
def project_sliders(ctx, project_id, edits):
    with _client(ctx) as client:
        current = {}
        if any(token.partition("=")[2][:1] in "+-" for token in edits):
            history = client.get(f"/projects/{project_id}/history")
            if history.status_code < 400 and history.json()["entries"]:
                current = history.json()["entries"][-1]["slider_state"]
        _echo_response(
            client.post(
                f"/projects/{project_id}/sliders",
                json={"edits": _parse_edits(edits, current)},
            )
        )


@project.command("conditioning")
@click.argument("project_id")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def project_conditioning(ctx, project_id, out):
    with _client(ctx) as client:
        response = client.get(f"/projects/{project_id}/conditioning.png")
        if response.status_code >= 400:
            click.echo(response.text, err=True)
            raise SystemExit(1)
        Path(out).write_bytes(response.content)
        click.echo(f"wrote {out}")


@project.command("mesh")
@click.argument("project_id")
@click.option("--out", type=click.Path(dir_okay=False))
@click.pass_context
def project_mesh(ctx, project_id, out):
    with _client(ctx) as client:
        response = client.get(f"/projects/{project_id}/mesh.json")
        if response.status_code >= 400:
            click.echo(response.text, err=True)
            raise SystemExit(1)
        if out:
            Path(out).write_text(json.dumps(response.json()))
            click.echo(f"wrote {out}")
        else:
            click.echo(json.dumps(response.json()))


@project.command("generate")
@click.argument("project_id")
@click.option("--prompt", required=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--steps", default=30, show_default=True)
@click.option("--guidance", default=2.5, show_default=True)
@click.option("--history-index", type=int)
@click.option("--out", type=click.Path(dir_okay=False), help="Also download the output PNG here.")
@click.pass_context
def project_generate(ctx, project_id, prompt, seed, steps, guidance, history_index, out):
    with _client(ctx) as client:
        body = {
            "prompt": prompt,
            "params": {"seed": seed, "steps": steps, "guidance": guidance},
        }
        if history_index is not None:
            body["history_index"] = history_index
        response = client.post(f"/projects/{project_id}/generate", json=body)
        if response.status_code >= 400:
            click.echo(response.text, err=True)
            raise SystemExit(1)
        record = response.json()
        click.echo(json.dumps(record, indent=2, sort_keys=True))
        if out:
            image = client.get(
                f"/projects/{project_id}/generations/{record['index']}/output.png"
            )
            Path(out).write_bytes(image.content)
            click.echo(f"wrote {out}")


@project.command("history")
@click.argument("project_id")
@click.pass_context
def project_history(ctx, project_id):
    with _client(ctx) as client:
        _echo_response(client.get(f"/projects/{project_id}/history"))


@project.command("health")
@click.pass_context
def project_health(ctx):
    with _client(ctx) as client:
        _echo_response(client.get("/healthz"))


@project.command("map")
@click.pass_context
def project_map(ctx):
    with _client(ctx) as client:
        _echo_response(client.get("/map"))


if __name__ == "__main__":
    sys.exit(main())
