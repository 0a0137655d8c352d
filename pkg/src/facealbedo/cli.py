"""Command-line interface.

Every subcommand is a thin wrapper over one library call; the manifest
mode (``run``) drives the whole batch build.  Exit codes: 0 success,
1 validation problem (bad arguments or manifest), 2 processing failure.
"""

from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np

from . import io
from .color import compose_calibration
from .errors import FaceAlbedoError, ManifestError
from .inpaint import eyeball_specular_fix, hybrid_inpaint
from .model import AlbedoPCA, PAIRING_VARIANTS, build_paired
from .pipeline import emit_plot_data, load_manifest, run_pipeline
from .poisson import stitch
from .render import albedo_mse, fit_albedo_ambient, render_random_samples
from .sampling import make_view_sample

_SEED_HELP = "Seed for the pseudo-random generator."


def _paths(text: str) -> list[Path]:
    return [Path(p) for p in text.split(",") if p]


def _load_signal_dir(directory: Path) -> tuple[list[str], list[np.ndarray]]:
    files = sorted(Path(directory).glob("*.vsig"))
    if not files:
        raise click.UsageError(f"no .vsig files under {directory}")
    return [f.stem for f in files], [io.load_vertex_signal(f) for f in files]


@click.group()
def cli():
    """Build and use statistical facial albedo models."""


@cli.command("stitch")
@click.option("--mesh", "mesh_path", required=True, help="Template OBJ.")
@click.option("--views", required=True,
              help="Comma-separated camera files, one per view.")
@click.option("--images", required=True,
              help="Comma-separated image files matching --views.")
@click.option("--reference", type=int, default=1, show_default=True,
              help="1-based index of the view fixing absolute colour.")
@click.option("--lambda", "screen_weight", type=float, default=0.1,
              show_default=True, help="Soft anchor weight.")
@click.option("--boundary-px", type=float, default=3.0, show_default=True,
              help="Down-weighting band near occluding contours, in pixels.")
@click.option("--out", "out_path", required=True)
def stitch_command(mesh_path, views, images, reference, screen_weight,
                   boundary_px, out_path):
    """Merge per-view samples into one seamless per-vertex map."""
    cameras = _paths(views)
    image_paths = _paths(images)
    if len(cameras) != len(image_paths):
        raise click.UsageError(
            f"{len(cameras)} cameras but {len(image_paths)} images")
    if not 1 <= reference <= len(cameras):
        raise click.UsageError(f"--reference {reference} out of range")
    mesh = io.load_mesh_obj(mesh_path)
    samples = [make_view_sample(mesh, io.load_camera(c), io.load_image(i),
                                boundary_px)
               for c, i in zip(cameras, image_paths)]
    merged = stitch(mesh, samples, reference - 1, screen_weight)
    io.save_vertex_signal(out_path, merged)


@cli.command("calibrate-color")
@click.option("--spd", required=True, help="Illuminant power CSV.")
@click.option("--sensitivity", required=True, help="Camera sensitivity CSV.")
@click.option("--out", "out_path", required=True)
def calibrate_color_command(spd, sensitivity, out_path):
    """Compute the raw-to-linear-sRGB 3x3 transform."""
    transform = compose_calibration(io.load_spectral_sensitivity(sensitivity),
                                    io.load_spectral_curve(spd))
    io.save_transform(out_path, transform)


def _half_model(paired, kind: str) -> AlbedoPCA:
    # single-map view over a paired model; coefficients always come from
    # the masked (least-squares) path so non-orthonormal halves are fine
    half = AlbedoPCA(n_components=paired.n_components_)
    prefix = "diffuse" if kind == "diffuse" else "specular"
    half.components_ = getattr(paired, f"{prefix}_components_")
    half.mean_ = getattr(paired, f"{prefix}_mean_")
    if kind == "specular" and hasattr(paired, "specular_component_stds_"):
        half.singular_values_ = paired.specular_singular_values_
        half.component_stds_ = paired.specular_component_stds_
    else:
        half.singular_values_ = paired.singular_values_
        half.component_stds_ = paired.component_stds_
    half.n_samples_fit_ = paired.n_samples_fit_
    half.n_vertices_ = paired.n_vertices_
    return half


@cli.command("inpaint")
@click.option("--mesh", "mesh_path", required=True)
@click.option("--signal", "signal_path", required=True)
@click.option("--mask", "mask_path", required=True,
              help="Vertex indices to replace.")
@click.option("--model", "model_path", required=True,
              help="Model directory guiding the fill.")
@click.option("--kind", type=click.Choice(["diffuse", "specular"]),
              default="diffuse", show_default=True)
@click.option("--out", "out_path", required=True)
def inpaint_command(mesh_path, signal_path, mask_path, model_path, kind,
                    out_path):
    """Replace masked vertices with a model-guided seamless fill."""
    mesh = io.load_mesh_obj(mesh_path)
    signal = io.load_vertex_signal(signal_path)
    indices = io.load_mask(mask_path)
    masked = np.zeros(mesh.n_vertices, dtype=bool)
    masked[indices] = True
    model = _half_model(io.load_model_dir(model_path), kind)
    io.save_vertex_signal(out_path, hybrid_inpaint(mesh, signal, masked, model))


@cli.command("eye-fix")
@click.option("--signal", "signal_path", required=True)
@click.option("--region", "region_path", required=True,
              help="Eyeball vertex indices.")
@click.option("--percentile", type=float, default=0.95, show_default=True)
@click.option("--out", "out_path", required=True)
def eye_fix_command(signal_path, region_path, percentile, out_path):
    """Replace an eye region by its robust per-channel maximum."""
    signal = io.load_vertex_signal(signal_path)
    region = io.load_mask(region_path)
    io.save_vertex_signal(out_path,
                          eyeball_specular_fix(signal, region, percentile))


@cli.command("build-model")
@click.option("--diffuse", "diffuse_dir", required=True,
              help="Directory of diffuse .vsig maps.")
@click.option("--specular", "specular_dir", required=True,
              help="Directory of specular .vsig maps (matching names).")
@click.option("--variant", type=click.Choice(PAIRING_VARIANTS),
              default="transferred", show_default=True)
@click.option("--d", "n_components", type=int, required=True,
              help="Number of principal components.")
@click.option("--symmetry", "symmetry_path", default=None,
              help="Bilateral vertex pairing for mirror augmentation.")
@click.option("--out", "out_path", required=True)
def build_model_command(diffuse_dir, specular_dir, variant, n_components,
                        symmetry_path, out_path):
    """Build a paired diffuse/specular model from completed maps."""
    diffuse_names, diffuse = _load_signal_dir(diffuse_dir)
    specular_names, specular = _load_signal_dir(specular_dir)
    if diffuse_names != specular_names:
        raise click.UsageError(
            "diffuse and specular directories hold different subjects")
    symmetry_map = None
    if symmetry_path is not None:
        symmetry_map = io.load_symmetry_map(symmetry_path, diffuse[0].shape[0])
    model = build_paired(diffuse, specular, n_components=n_components,
                         variant=variant, symmetry_map=symmetry_map)
    io.save_model_dir(out_path, model)


@cli.command("sample")
@click.option("--model", "model_path", required=True)
@click.option("--mesh", "mesh_path", required=True,
              help="Geometry supplying the shading normals.")
@click.option("--count", type=int, default=50, show_default=True)
@click.option("--rotation-deg", type=float, default=30.0, show_default=True,
              help="Light rotation range about the vertical axis.")
@click.option("--seed", type=int, default=0, show_default=True,
              help=_SEED_HELP)
@click.option("--out", "out_dir", required=True)
def sample_command(model_path, mesh_path, count, rotation_deg, seed, out_dir):
    """Render random model draws to per-vertex appearance maps."""
    model = io.load_model_dir(model_path)
    mesh = io.load_mesh_obj(mesh_path)
    renders = render_random_samples(model, mesh, count,
                                    rotation_range_deg=rotation_deg, seed=seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    width = max(3, len(str(max(count - 1, 0))))
    for i, render in enumerate(renders):
        io.save_vertex_signal(out_dir / f"sample_{i:0{width}d}.vsig", render)


@cli.command("fit")
@click.option("--model", "model_path", required=True)
@click.option("--mesh", "mesh_path", required=True)
@click.option("--observed", "observed_path", required=True,
              help="Observed per-vertex appearance (.vsig, display space).")
@click.option("--out", "out_path", required=True)
def fit_command(model_path, mesh_path, observed_path, out_path):
    """Fit diffuse coefficients and ambient light to an observation."""
    model = io.load_model_dir(model_path)
    mesh = io.load_mesh_obj(mesh_path)
    observed = io.load_vertex_signal(observed_path)
    result = fit_albedo_ambient(observed, mesh, model)
    payload = {
        "coefficients": result.coefficients.tolist(),
        "ambient": result.ambient.tolist(),
        "converged": result.converged,
        "n_iterations": result.n_iterations,
        "objective": result.objective,
    }
    Path(out_path).write_text(json.dumps(payload, indent=2, sort_keys=True)
                              + "\n")
    if not result.converged:
        click.echo(f"warning: fit stopped after {result.n_iterations} "
                   f"iterations without converging", err=True)


@cli.command("eval")
@click.option("--estimated", required=True,
              help="Comma-separated estimated .vsig files.")
@click.option("--truth", required=True,
              help="Comma-separated ground-truth .vsig files.")
@click.option("--region", "region_path", default=None,
              help="Restrict the error to these vertices.")
@click.option("--out", "out_path", default=None,
              help="Also write the per-subject table as CSV.")
def eval_command(estimated, truth, region_path, out_path):
    """Print mean squared albedo error as `mean ± std` over subjects."""
    estimated_paths = _paths(estimated)
    truth_paths = _paths(truth)
    if len(estimated_paths) != len(truth_paths):
        raise click.UsageError(
            f"{len(estimated_paths)} estimates but {len(truth_paths)} truths")
    region = io.load_mask(region_path) if region_path else None
    pairs = [(io.load_vertex_signal(e), io.load_vertex_signal(t))
             for e, t in zip(estimated_paths, truth_paths)]
    table = emit_plot_data("mse-table", {
        "pairs": pairs,
        "ids": [p.stem for p in estimated_paths],
        "region": region,
    })
    if out_path:
        Path(out_path).write_text(table)
    errors = [albedo_mse(e, t, region) for e, t in pairs]
    click.echo(f"{np.mean(errors):.4f} ± {np.std(errors):.4f}")


@cli.command("eval-loo")
@click.option("--diffuse", "diffuse_dir", required=True)
@click.option("--specular", "specular_dir", required=True)
@click.option("--variants", default=",".join(PAIRING_VARIANTS),
              show_default=True, help="Comma-separated pairing variants.")
@click.option("--d-values", "d_values", required=True,
              help="Comma-separated model dimensions to evaluate.")
@click.option("--symmetry", "symmetry_path", default=None)
@click.option("--out", "out_path", default=None,
              help="Write CSV here instead of stdout.")
def eval_loo_command(diffuse_dir, specular_dir, variants, d_values,
                     symmetry_path, out_path):
    """Tabulate leave-one-out specular generalisation error."""
    diffuse_names, diffuse = _load_signal_dir(diffuse_dir)
    specular_names, specular = _load_signal_dir(specular_dir)
    if diffuse_names != specular_names:
        raise click.UsageError(
            "diffuse and specular directories hold different subjects")
    variant_list = [v for v in variants.split(",") if v]
    for variant in variant_list:
        if variant not in PAIRING_VARIANTS:
            raise click.UsageError(f"unknown variant {variant!r}")
    symmetry_map = None
    if symmetry_path is not None:
        symmetry_map = io.load_symmetry_map(symmetry_path, diffuse[0].shape[0])
    csv = emit_plot_data("loo", {
        "diffuse": diffuse,
        "specular": specular,
        "variants": variant_list,
        "d_values": [int(d) for d in d_values.split(",") if d],
        "symmetry_map": symmetry_map,
    })
    if out_path:
        Path(out_path).write_text(csv)
    else:
        click.echo(csv, nl=False)


@cli.command("run")
@click.option("--manifest", "manifest_path", required=True)
@click.option("--data-dir", default=None,
              help="Base for relative manifest paths (overrides "
                   "FACEALBEDO_DATA_DIR).")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Concurrent subjects.")
@click.option("--seed", type=int, default=0, show_default=True,
              help=_SEED_HELP + " Reserved; every stage is deterministic.")
@click.pass_context
def run_command(ctx, manifest_path, data_dir, jobs, seed):
    """Run the whole batch build described by a manifest."""
    del seed
    manifest = load_manifest(manifest_path, data_dir=data_dir)
    report = run_pipeline(manifest, jobs=jobs)
    n_failed = len(report["failures"])
    n_used = report["model"]["n_subjects_used"]
    click.echo(f"model written to {manifest.output / 'model'} "
               f"({n_used} subjects, {n_failed} failed)")
    for failure in report["failures"]:
        click.echo(f"failed {failure['id']} at {failure['stage']}: "
                   f"{failure['message']}", err=True)
    if n_failed:
        ctx.exit(2)


def main(argv=None) -> int:
    """Console entry point with the documented exit codes."""
    try:
        # without standalone mode click either returns ctx.exit's code or
        # raises Exit, depending on version; accept both
        result = cli.main(args=argv, standalone_mode=False)
        if isinstance(result, int):
            return result
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return 1
    except ManifestError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except FaceAlbedoError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except (ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
