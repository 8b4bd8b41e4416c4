"""Command line client for the fitting and evaluation service.

Commands build JSON requests from local files and post them to the HTTP
service; by default an in-process instance is used, `--server` targets a
running one.  Exit codes: 0 success, 1 runtime failure, 2 bad config.
"""

import argparse
import json
import sys
import warnings

from .data import (
    DataError,
    DataFetchError,
    fetch_openml,
    load_arff,
    load_csv,
)
from .threat import split_token_list


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _client(server):
    if server:
        import httpx
        return httpx.Client(base_url=server, timeout=600.0)
    with warnings.catch_warnings():
        # some fastapi builds warn about their own httpx use on import
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service.app import app
    return TestClient(app)


def _post(client, path, payload):
    try:
        resp = client.post(path, json=payload)
    except Exception as exc:
        raise CliError(1, f"service unreachable: {exc}") from None
    if resp.status_code == 422:
        detail = resp.json().get("detail")
        raise CliError(2, f"invalid request: {detail}")
    if resp.status_code != 200:
        raise CliError(1, f"service error {resp.status_code}: {resp.text}")
    return resp.json()


def _load_dataset(args):
    if bool(args.data) == bool(args.openml):
        raise CliError(2, "pass exactly one of --data or --openml")
    categorical = []
    if args.data:
        if args.categorical:
            categorical = [int(c) if c.lstrip("-").isdigit() else c
                           for c in args.categorical.split(",")]
        label = args.label_col if args.label_col is not None else -1
        if isinstance(label, str) and label.lstrip("-").isdigit():
            label = int(label)
        try:
            ds = load_csv(args.data, label, categorical_columns=categorical,
                          delimiter=args.delimiter)
        except FileNotFoundError:
            raise CliError(2, f"no such file: {args.data}") from None
        except DataError as exc:
            raise CliError(2, str(exc)) from None
        return ds
    try:
        if args.openml.isdigit():
            path = fetch_openml(int(args.openml), cache_dir=args.cache_dir)
        else:
            path = fetch_openml(name=args.openml, version=args.data_version,
                                cache_dir=args.cache_dir)
        return load_arff(path, label_column=args.label_col)
    except DataFetchError as exc:
        raise CliError(1, str(exc)) from None
    except DataError as exc:
        raise CliError(2, str(exc)) from None


def _threat_payload(args, dataset, prefix=""):
    threat = getattr(args, f"{prefix}threat".replace("-", "_"), None)
    threat_file = getattr(args, f"{prefix}threat_file".replace("-", "_"),
                          None)
    epsilon = getattr(args, f"{prefix}epsilon".replace("-", "_"), None)
    given = [v for v in (threat, threat_file, epsilon) if v is not None]
    if len(given) > 1:
        flag = prefix.replace("_", "-")
        raise CliError(
            2, f"--{flag}threat, --{flag}threat-file and "
               f"--{flag}epsilon are mutually exclusive")
    if not given:
        return None
    if epsilon is not None:
        cats = set(dataset.categorical_indices)
        tokens = ["" if j in cats else repr(float(epsilon))
                  for j in range(dataset.n_features)]
    elif threat is not None:
        tokens = split_token_list(threat)
    else:
        try:
            with open(threat_file) as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise CliError(2, f"no such file: {threat_file}") from None
        except json.JSONDecodeError as exc:
            raise CliError(2, f"{threat_file}: not valid JSON: {exc}") \
                from None
        if not isinstance(doc, dict) or "perturbations" not in doc:
            raise CliError(
                2, f"{threat_file}: expected a perturbations list")
        tokens = doc["perturbations"]
        if "attacked_classes" in doc and args.attacked_classes is None:
            return {"tokens": tokens,
                    "attacked_classes": doc["attacked_classes"]}
    attacked = [0, 1]
    if args.attacked_classes is not None:
        text = args.attacked_classes.strip()
        attacked = [int(c) for c in text.split(",") if c != ""] if text \
            else []
    return {"tokens": tokens, "attacked_classes": attacked}


def _emit(doc, out):
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _canonical_model_text(model_doc):
    return json.dumps(model_doc, sort_keys=True,
                      separators=(",", ":")) + "\n"


def cmd_fit(args):
    ds = _load_dataset(args)
    client = _client(args.server)
    payload = {
        "rows": ds.X.tolist(),
        "labels": ds.y.tolist(),
        "feature_names": ds.feature_names,
        "categorical": ds.categorical_indices,
        "threat": _threat_payload(args, ds),
        "options": {
            "max_depth": args.max_depth,
            "min_samples_split": args.min_samples_split,
            "rho": args.rho,
            "seed": args.seed,
        },
        "scale": not args.no_scale,
    }
    body = _post(client, "/fit", payload)
    with open(args.out, "w") as fh:
        fh.write(_canonical_model_text(body["model"]))
    doc = {"command": "fit", "model_path": args.out,
           "summary": body["summary"], "config": body["config"],
           "label_mapping": ds.label_mapping}
    _emit(doc, None)
    return 0


def _read_model(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise CliError(2, f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise CliError(2, f"{path}: not valid JSON: {exc}") from None


def cmd_eval(args):
    ds = _load_dataset(args)
    client = _client(args.server)
    payload = {
        "model": _read_model(args.model),
        "rows": ds.X.tolist(),
        "labels": ds.y.tolist(),
        "threat": _threat_payload(args, ds),
        "report": args.report,
    }
    body = _post(client, "/evaluate", payload)
    doc = {"command": "eval", "model_path": args.model,
           "accuracy": body["accuracy"],
           "adversarial_accuracy": body["adversarial_accuracy"],
           "n_samples": body["n_samples"], "config": body["config"]}
    if args.report:
        doc["records"] = body["records"]
    _emit(doc, args.out)
    return 0


def cmd_cv(args):
    ds = _load_dataset(args)
    client = _client(args.server)
    payload = {
        "rows": ds.X.tolist(),
        "labels": ds.y.tolist(),
        "feature_names": ds.feature_names,
        "categorical": ds.categorical_indices,
        "threat": _threat_payload(args, ds),
        "attack": _threat_payload(args, ds, prefix="attack_"),
        "options": {
            "max_depth": args.max_depth,
            "min_samples_split": args.min_samples_split,
            "rho": args.rho,
            "seed": args.seed,
        },
        "folds": args.folds,
        "scale": not args.no_scale,
    }
    body = _post(client, "/cross-validate", payload)
    doc = {"command": "cv", **body}
    if args.table:
        lines = [f"{'fold':>4}  {'accuracy':>9}  {'adversarial':>11}  "
                 f"{'fit_s':>8}"]
        for f in body["folds"]:
            lines.append(f"{f['fold']:>4}  {f['accuracy']:>9.3f}  "
                         f"{f['adversarial_accuracy']:>11.3f}  "
                         f"{f['fit_seconds']:>8.3f}")
        lines.append(
            f"mean  {body['mean_accuracy']:>9.3f}  "
            f"{body['mean_adversarial_accuracy']:>11.3f}")
        lines.append(
            f" std  {body['std_accuracy']:>9.3f}  "
            f"{body['std_adversarial_accuracy']:>11.3f}")
        text = "\n".join(lines) + "\n"
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return 0
    _emit(doc, args.out)
    return 0


def cmd_grid(args):
    client = _client(args.server)
    payload = {"model": _read_model(args.model),
               "resolution": args.grid_resolution}
    if args.features:
        try:
            i, j = (int(v) for v in args.features.split(","))
        except ValueError:
            raise CliError(2, "--features takes two indices, e.g. 0,1") \
                from None
        payload["features"] = [i, j]
    body = _post(client, "/grid", payload)
    lines = ["x,y,label"]
    lines += [f"{x},{y},{label}" for x, y, label in body["rows"]]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_serve(args):
    import uvicorn

    from .service.app import app
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def _add_data_flags(p):
    p.add_argument("--data", help="CSV file with a header row")
    p.add_argument("--openml", help="openML dataset id or name")
    p.add_argument("--data-version", type=int, default=1,
                   help="openML dataset version (with --openml name)")
    p.add_argument("--cache-dir", default="openml_cache")
    p.add_argument("--label-col", default=None,
                   help="label column name or index (default: last)")
    p.add_argument("--categorical", default=None,
                   help="comma separated categorical column names or indices")
    p.add_argument("--delimiter", default=",")


def _add_threat_flags(p, prefix=""):
    p.add_argument(f"--{prefix}threat", default=None,
                   help="comma separated per-feature perturbation tokens")
    p.add_argument(f"--{prefix}threat-file", default=None,
                   help="JSON file with perturbations and attacked_classes")
    p.add_argument(f"--{prefix}epsilon", type=float, default=None,
                   help="uniform symmetric perturbation for all numerical "
                        "features")


def _add_fit_flags(p):
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--max-depth", type=int, default=4)
    p.add_argument("--min-samples-split", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-scale", action="store_true",
                   help="skip min-max scaling to [0, 1]")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="robtree",
        description="Fit and evaluate decision trees that are robust to "
                    "adversarial perturbations.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a robust tree and save the model")
    _add_data_flags(p)
    _add_threat_flags(p)
    _add_fit_flags(p)
    p.add_argument("--attacked-classes", default=None,
                   help="comma separated labels the attacker may move")
    p.add_argument("--out", default="model.json", help="model output path")
    p.add_argument("--server", default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="evaluate a model under attack")
    _add_data_flags(p)
    _add_threat_flags(p)
    p.add_argument("--attacked-classes", default=None)
    p.add_argument("--model", required=True)
    p.add_argument("--report", action="store_true",
                   help="include per-sample attack records")
    p.add_argument("--out", default=None)
    p.add_argument("--server", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cv", help="stratified cross validation benchmark")
    _add_data_flags(p)
    _add_threat_flags(p)
    _add_threat_flags(p, prefix="attack-")
    _add_fit_flags(p)
    p.add_argument("--attacked-classes", default=None)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--table", action="store_true",
                   help="render a text table instead of JSON")
    p.add_argument("--out", default=None)
    p.add_argument("--server", default=None)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("grid", help="export a prediction grid for plotting")
    p.add_argument("--model", required=True)
    p.add_argument("--grid-resolution", type=int, default=100)
    p.add_argument("--features", default=None,
                   help="two feature indices, e.g. 0,1")
    p.add_argument("--out", default=None)
    p.add_argument("--server", default=None)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
