"""Command-line interface: grow forests and emit diagnostic tables.

Exit status is 0 on success, 1 on a runtime failure and 2 on a usage or
validation error. The default seed comes from ``SURVFOREST_SEED`` when set.
"""

from __future__ import annotations

import functools
import json
import os
import sys
import warnings

import click
import pandas as pd

from . import __version__, dependence, importance, inference, km
from .dataset import (Frame, cut_with_breaks, group_by_levels, load_frame, load_pbc,
                      missing_census, quantile_cuts, read_schema, split_trial)
from .errors import ConfigError, ParseError, SurvForestError, ValidationError
from .forest import SCHEMA_VERSION, GrowConfig, grow, load, save
from .tables import FORMATS, write_record, write_table

BUILTIN = ("pbc", "pbc.trial", "pbc.test")
SEED_ENV = "SURVFOREST_SEED"


class FloatList(click.ParamType):
    name = "floats"

    def convert(self, value, param, ctx):
        if isinstance(value, (list, tuple)):
            return list(value)
        try:
            return [float(v) for v in str(value).split(",") if v.strip()]
        except ValueError:
            self.fail(f"{value!r} is not a comma-separated list of numbers", param, ctx)


FLOATS = FloatList()


def _default_seed():
    raw = os.environ.get(SEED_ENV)
    return int(raw) if raw else 0


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def guarded(fn):
    """Map package errors onto exit codes and route warnings to stderr."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                result = fn(*args, **kwargs)
            except (ValidationError, ConfigError, ParseError) as exc:
                _fail(str(exc), 2)
            except (SurvForestError, OSError) as exc:
                _fail(str(exc), 1)
            finally:
                for w in caught:
                    click.echo(f"warning: {w.message}", err=True)
        return result
    return wrapper


def data_options(fn):
    fn = click.option("--delimiter", default=",", show_default=True)(fn)
    fn = click.option("--na-token", default="NA", show_default=True)(fn)
    fn = click.option("--status-col", default=None, help="Event indicator column.")(fn)
    fn = click.option("--time-col", default=None, help="Follow-up time column.")(fn)
    fn = click.option("--schema", type=click.Path(exists=True, dir_okay=False),
                      help="JSON schema with variable types.")(fn)
    return fn


def output_options(fn):
    fn = click.option("--format", "fmt", type=click.Choice(FORMATS), default="csv",
                      show_default=True)(fn)
    fn = click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".",
                      show_default=True, help="Directory for output tables.")(fn)
    return fn


def forest_option(fn):
    return click.option("--forest", "forest_path", required=True,
                        type=click.Path(exists=True, dir_okay=False),
                        help="Forest file written by `fit`.")(fn)


def group_options(fn):
    fn = click.option("--breaks", type=FLOATS, help="Explicit ascending cut points.")(fn)
    fn = click.option("--groups", type=int, help="Number of quantile groups.")(fn)
    fn = click.option("--group-var", help="Variable defining the groups.")(fn)
    return fn


def read_data(source, schema=None, time_col=None, status_col=None, na_token="NA",
              delimiter=",") -> Frame:
    """Load a delimited file, or one of the bundled names pbc, pbc.trial, pbc.test."""
    if source in BUILTIN:
        frame = load_pbc()
        if source == "pbc":
            return frame
        trial, test = split_trial(frame)
        return trial if source == "pbc.trial" else test
    specs = None
    if schema:
        doc = read_schema(schema)
        specs = doc["variables"]
        time_col = time_col or doc.get("time")
        status_col = status_col or doc.get("status")
        na_token = doc.get("na_token", na_token)
    return load_frame(source, specs, na_token, time_col=time_col or "time",
                      status_col=status_col or "status", delimiter=delimiter)


def grouping(frame: Frame, var, groups, breaks):
    if var is None:
        if groups or breaks:
            raise ValidationError("--groups/--breaks need --group-var")
        return None
    if var not in frame.names:
        raise ValidationError(f"unknown variable {var!r}; known: {', '.join(frame.names)}")
    if breaks:
        return cut_with_breaks(frame.column(var), breaks, var)
    if groups:
        return quantile_cuts(frame.column(var), groups, var)
    return group_by_levels(frame, var)


def _announce(path):
    click.echo(f"wrote {path}")


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, "--version", message=json.dumps(
    {"package": __version__, "forest_schema": SCHEMA_VERSION}))
def main():
    """Random survival forests and their diagnostic data tables."""


@main.command()
@click.option("--data", required=True, help="Delimited file or pbc, pbc.trial, pbc.test.")
@data_options
@output_options
@guarded
def census(data, schema, time_col, status_col, na_token, delimiter, out_dir, fmt):
    """Missing-value counts per variable."""
    frame = read_data(data, schema, time_col, status_col, na_token, delimiter)
    df = pd.DataFrame(missing_census(frame), columns=["variable", "missing"])
    _announce(write_table(df, out_dir, "census", fmt))


@main.command("km")
@click.option("--data", required=True)
@data_options
@group_options
@click.option("--conf-level", type=float, default=0.95, show_default=True)
@output_options
@guarded
def km_cmd(data, schema, time_col, status_col, na_token, delimiter, group_var, groups, breaks,
           conf_level, out_dir, fmt):
    """Kaplan-Meier and Nelson-Aalen estimates, overall or by group."""
    frame = read_data(data, schema, time_col, status_col, na_token, delimiter)
    curves = km.kaplan_meier(frame, grouping(frame, group_var, groups, breaks), conf_level)
    _announce(write_table(km.curves_table(curves), out_dir, "km", fmt))


@main.command()
@click.option("--data", required=True)
@data_options
@click.option("--forest", "forest_path", required=True, type=click.Path(dir_okay=False),
              help="Where to write the forest (.gz compresses).")
@click.option("--ntree", type=int, default=1000, show_default=True)
@click.option("--mtry", type=int, default=None, help="Default ceil(sqrt(p)).")
@click.option("--nsplit", type=int, default=10, show_default=True)
@click.option("--nodesize", type=int, default=3, show_default=True)
@click.option("--seed", type=int, default=_default_seed, show_default=f"${SEED_ENV} or 0")
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--impute/--no-impute", default=True, show_default=True)
@guarded
def fit(data, schema, time_col, status_col, na_token, delimiter, forest_path, ntree, mtry,
        nsplit, nodesize, seed, threads, impute):
    """Grow a forest and print its summary."""
    frame = read_data(data, schema, time_col, status_col, na_token, delimiter)
    cfg = GrowConfig(ntree=ntree, mtry=mtry, nsplit=nsplit, nodesize=nodesize, seed=seed,
                     impute=impute)
    forest = grow(frame, cfg, threads=threads)
    save(forest, forest_path)
    ens = inference.predict_oob(forest)
    summary = forest.summary()
    summary["oob_error"] = inference.concordance_error(ens.mortality, frame.time, frame.status)
    for k, v in summary.items():
        click.echo(f"{k:>12} : {v}")
    _announce(forest_path)


@main.command()
@forest_option
@click.option("--data", default=None, help="New data; default is the training data (OOB).")
@data_options
@click.option("--impute/--no-impute", default=True, show_default=True)
@group_options
@click.option("--conf-level", type=float, default=0.95, show_default=True)
@click.option("--bs-samples", type=int, default=None, help="Default: group size.")
@click.option("--seed", type=int, default=_default_seed)
@output_options
@guarded
def predict(forest_path, data, schema, time_col, status_col, na_token, delimiter, impute,
            group_var, groups, breaks, conf_level, bs_samples, seed, out_dir, fmt):
    """Ensemble survival curves (OOB for the training data), optionally grouped."""
    forest = load(forest_path)
    if data is None:
        frame = forest.train
        ens = inference.predict_oob(forest)
    else:
        frame = read_data(data, schema, time_col, status_col, na_token, delimiter)
        ens = inference.predict_test(forest, frame, impute=impute)
        click.echo(f"test error : {inference.concordance_error(ens.mortality, frame.time, frame.status)}")
    _announce(write_table(ens.table(), out_dir, "survival", fmt))
    by = grouping(frame, group_var, groups, breaks)
    if by is not None:
        curves = inference.grouped_survival(ens, by, conf_level, bs_samples, seed)
        _announce(write_table(inference.grouped_table(curves), out_dir, "grouped", fmt))


@main.command()
@forest_option
@output_options
@guarded
def error(forest_path, out_dir, fmt):
    """OOB error as a function of the number of trees."""
    curve = inference.error_curve(load(forest_path))
    _announce(write_table(curve.table(), out_dir, "error", fmt))


@main.command()
@forest_option
@click.option("--seed", type=int, default=_default_seed)
@output_options
@guarded
def vimp(forest_path, seed, out_dir, fmt):
    """Permutation variable importance."""
    table = importance.vimp(load(forest_path), seed=seed)
    _announce(write_table(table.table(), out_dir, "vimp", fmt))


@main.command()
@forest_option
@click.option("--seed", type=int, default=_default_seed, help="Seed for the VIMP comparison.")
@click.option("--compare/--no-compare", default=False, help="Also emit depth vs VIMP ranks.")
@output_options
@guarded
def mindepth(forest_path, seed, compare, out_dir, fmt):
    """Minimal depth, selection threshold and model size."""
    forest = load(forest_path)
    depth = importance.minimal_depth(forest)
    ens = inference.predict_oob(forest)
    err = inference.concordance_error(ens.mortality, forest.train.time, forest.train.status)
    summary = importance.selection_summary(forest, depth, err)
    for k, v in summary.items():
        click.echo(f"{k:>14} : {v}")
    _announce(write_table(depth.table(), out_dir, "mindepth", fmt))
    _announce(write_record(summary, out_dir, "mindepth_summary"))
    if compare:
        table = importance.depth_vimp_compare(depth, importance.vimp(forest, seed=seed))
        _announce(write_table(table, out_dir, "depth_vimp", fmt))


@main.command()
@forest_option
@output_options
@guarded
def interact(forest_path, out_dir, fmt):
    """Pairwise maximal-subtree interaction matrix."""
    matrix = importance.interactions(load(forest_path))
    _announce(write_table(matrix.table(), out_dir, "interaction", fmt))


def _xvars(value):
    return [v.strip() for v in value.split(",") if v.strip()]


@main.command()
@forest_option
@click.option("--xvar", required=True, help="Comma-separated variable names.")
@click.option("--times", type=FLOATS, default="1", show_default=True)
@output_options
@guarded
def vardep(forest_path, xvar, times, out_dir, fmt):
    """OOB survival at time slices against observed variable values."""
    grid = dependence.variable_dependence(load(forest_path), None, _xvars(xvar), times)
    _announce(write_table(grid.records, out_dir, "vardep", fmt))


@main.command()
@forest_option
@click.option("--xvar", required=True, help="Comma-separated variable names.")
@click.option("--times", type=FLOATS, default="1", show_default=True)
@click.option("--npts", type=int, default=25, show_default=True)
@output_options
@guarded
def pdp(forest_path, xvar, times, npts, out_dir, fmt):
    """Partial dependence curves (box summaries for categorical variables)."""
    forest = load(forest_path)
    recs, boxes = [], []
    for xv in _xvars(xvar):
        grid = dependence.partial_dependence(forest, None, xv, times, npts)
        recs.append(grid.records)
        if grid.boxes is not None:
            boxes.append(grid.boxes)
    _announce(write_table(pd.concat(recs, ignore_index=True), out_dir, "pdp", fmt))
    if boxes:
        _announce(write_table(pd.concat(boxes, ignore_index=True), out_dir, "pdp_boxes", fmt))


@main.command()
@forest_option
@click.option("--xvar", required=True)
@group_options
@click.option("--times", type=FLOATS, default="1", show_default=True)
@click.option("--partial", is_flag=True, help="Partial dependence per group instead of raw "
              "variable dependence.")
@click.option("--npts", type=int, default=25, show_default=True)
@output_options
@guarded
def coplot(forest_path, xvar, group_var, groups, breaks, times, partial, npts, out_dir, fmt):
    """Variable or partial dependence conditional on group membership."""
    forest = load(forest_path)
    by = grouping(forest.train, group_var, groups, breaks)
    if by is None:
        raise ValidationError("coplot needs --group-var")
    if partial:
        parts = [dependence.partial_coplot(forest, None, xvar, by, t, npts) for t in times]
        recs = pd.concat([g.records for g in parts], ignore_index=True)
    else:
        recs = dependence.variable_coplot_data(forest, None, xvar, by, times).records
    _announce(write_table(recs, out_dir, "coplot", fmt))


@main.command()
@forest_option
@click.option("--xvar", required=True)
@click.option("--axis2", default="time", show_default=True,
              help="'time' or a second variable name.")
@click.option("--npts", type=int, default=50, show_default=True)
@click.option("--n-axis2", type=int, default=50, show_default=True)
@click.option("--times", type=FLOATS, default="1", show_default=True,
              help="Time slices (variable axis) or anchor times (time axis).")
@output_options
@guarded
def surface(forest_path, xvar, axis2, npts, n_axis2, times, out_dir, fmt):
    """Partial dependence surface over variable x time or variable x variable."""
    forest = load(forest_path)
    grid = dependence.partial_surface(forest, None, xvar, axis2, npts, n_axis2, times=times,
                                      anchors=times if axis2 == "time" else ())
    _announce(write_table(grid.records, out_dir, "surface", fmt))


if __name__ == "__main__":
    main()
