"""Config-driven two-step pipeline: representation stages, then the GLM.

A pipeline config is an INI-style file::

    [pipeline]
    seed = 42
    manifest = run.manifest

    [stage data]
    kind = synth
    generator = tabular-latent
    output = data/tabular.csv
    n = 2000

    [stage codes]
    kind = pca
    input = data/tabular.csv
    columns = z1,z2,z3
    dim = 2
    output = out/codes.emb

Relative paths resolve against the config file's directory. Stages run in
dependency order (a stage reading a file waits for the stage writing it);
the whole config is validated before anything runs. Each stage's seed is its
own ``seed`` key, else derived from the global seed and the stage name.
"""

from __future__ import annotations

import configparser
import hashlib
import inspect
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import synth as _synth
from .autoencode import AutoencoderSpec, ConvStage, ae_fit, conv_ae_fit, encode_batch, read_pnm
from .dimred import pca_fit, save_pca, standardize
from .embeddings import EmbeddingTable, read_embeddings, write_embeddings
from .errors import EmbedrateError
from .evaluate import extrinsic_compare, nearest_neighbors
from .geo import build_cuboids, crae_embed, crae_fit, read_geo_points
from .glm import DesignMatrix, GlmFamily, coefficient_report, glm_fit, glm_predict, load_glm, save_glm
from .nn import TrainConfig, format_float, save_network
from .sequence import many_to_one_fit, read_sequences, sequence_embed
from .tables import Table, read_table, write_table
from .text import build_vocab, doc_centroid, read_corpus, word2vec_train

__all__ = [
    "ValidationError",
    "StageError",
    "Stage",
    "PipelineConfig",
    "RunManifest",
    "STAGES",
    "load_config",
    "parse_config",
    "validate",
    "run_pipeline",
    "file_checksum",
]


class ValidationError(EmbedrateError):
    """The pipeline config is invalid; nothing has been run."""


class StageError(EmbedrateError):
    """A stage failed while running."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class Stage:
    name: str
    kind: str
    params: dict


@dataclass
class PipelineConfig:
    seed: int = 0
    stages: list = field(default_factory=list)
    base_dir: Path = Path(".")
    manifest: str = ""

    def canonical(self) -> str:
        lines = [f"seed={self.seed}"]
        for st in self.stages:
            lines.append(f"[{st.name}] kind={st.kind}")
            lines += [f"{k}={st.params[k]}" for k in sorted(st.params)]
        return "\n".join(lines) + "\n"


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    stages: list = field(default_factory=list)  # dicts: name, kind, seed, inputs, outputs, seconds

    def checksums(self) -> dict:
        """Everything but timings, for reproducibility comparisons."""
        out = {"config_hash": self.config_hash, "seed": str(self.seed)}
        for st in self.stages:
            out[f"stage.{st['name']}.kind"] = st["kind"]
            for path, digest in st["inputs"].items():
                out[f"stage.{st['name']}.input.{path}"] = digest
            for path, digest in st["outputs"].items():
                out[f"stage.{st['name']}.output.{path}"] = digest
        return out

    def to_text(self) -> str:
        lines = [f"{k}: {v}" for k, v in self.checksums().items()]
        lines += [f"stage.{st['name']}.seconds: {st['seconds']:.3f}" for st in self.stages]
        return "\n".join(lines) + "\n"


# -- parameter helpers ----------------------------------------------------------

def _split(value, sep=","):
    return [v.strip() for v in str(value).split(sep) if v.strip()]


def _int(params, key):
    return int(params[key])


def _float(params, key):
    return float(params[key])


def _bool(params, key):
    v = str(params[key]).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{key} must be a boolean, got {params[key]!r}")


def _train_config(params, seed):
    return TrainConfig(learning_rate=_float(params, "learning_rate"), epochs=_int(params, "epochs"),
                       batch_size=_int(params, "batch_size"), seed=seed)


def file_checksum(path: Path) -> str:
    """SHA-256 of a file, or of the sorted (name, digest) list of a directory."""
    path = Path(path)
    if path.is_dir():
        h = hashlib.sha256()
        for child in sorted(p for p in path.rglob("*") if p.is_file()):
            h.update(str(child.relative_to(path)).encode() + b"\0")
            h.update(file_checksum(child).encode() + b"\n")
        return h.hexdigest()
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _block_specs(value):
    """``name:path[:col,col]`` items separated by ``;``."""
    specs = []
    for item in _split(value, ";"):
        parts = item.split(":", 2)
        if len(parts) < 2 or not parts[0] or not parts[1]:
            raise ValueError(f"bad block {item!r}; expected name:path[:columns]")
        specs.append((parts[0].strip(), parts[1].strip(), _split(parts[2]) if len(parts) == 3 else None))
    return specs


def _load_rows(path: Path, columns=None):
    """Ids and an n x w matrix from a CSV table or an embedding file."""
    if path.suffix == ".csv":
        table = read_table(path)
        cols = columns or table.columns
        return table.ids, table.select(cols), list(cols)
    emb = read_embeddings(path)
    if columns:
        idx = [int(c) for c in columns]
        return emb.ids, emb.vectors[:, idx], [str(i) for i in idx]
    return emb.ids, emb.vectors, [str(i) for i in range(emb.dim)]


def _join(sources):
    """Horizontally join ``(ids, matrix)`` sources on id, in the first source's order."""
    ids = sources[0][0]
    mats = []
    for other_ids, mat, *_ in sources:
        if set(other_ids) != set(ids) or len(other_ids) != len(ids):
            raise ValueError("inputs do not share the same set of ids")
        pos = {k: i for i, k in enumerate(other_ids)}
        mats.append(mat[[pos[k] for k in ids]])
    return ids, np.hstack(mats)


def _read_design(path: Path):
    table = read_table(path)
    return table.ids, DesignMatrix(table.values, table.columns)


def _response(params, base, ids):
    table = read_table(base / params["response"])
    pos = {k: i for i, k in enumerate(table.ids)}
    missing = [k for k in ids if k not in pos]
    if missing:
        raise ValueError(f"response file lacks id {missing[0]!r}")
    return table.column(params["response_column"])[[pos[k] for k in ids]]


# -- stage implementations ------------------------------------------------------

def _run_synth(p, base, seed):
    kind = p["generator"]
    extra = {k: v for k, v in p.items() if k not in ("generator", "output", "seed")}
    _synth.synth_generate(kind, base / p["output"], seed=seed, **_coerce_generator_params(kind, extra))


def _generator_fn(kind):
    return {
        "tabular-latent": _synth.tabular_latent,
        "marker-sequences": _synth.marker_sequences,
        "cluster-corpus": _synth.cluster_corpus,
        "square-images": _synth.square_images,
        "smooth-geo-field": _synth.smooth_geo_field,
    }[kind]


def _coerce_generator_params(kind, extra):
    sig = inspect.signature(_generator_fn(kind))
    out = {}
    for key, raw in extra.items():
        default = sig.parameters[key].default
        out[key] = int(raw) if isinstance(default, int) else float(raw)
    return out


def _run_standardize(p, base, seed):
    table = read_table(base / p["input"])
    cols = _split(p["columns"]) if p.get("columns") else table.columns
    z, _, _ = standardize(table.select(cols))
    write_table(base / p["output"], table.ids, cols, z)


def _matrix_input(p, base):
    cols = _split(p["columns"]) if p.get("columns") else None
    sources = [_load_rows(base / path, cols) for path in _split(p["input"])]
    return _join(sources)


def _run_pca(p, base, seed):
    ids, x = _matrix_input(p, base)
    model = pca_fit(x, _int(p, "dim"))
    write_embeddings(EmbeddingTable(ids, model.encode(x), model.dim), base / p["output"])
    if p.get("model"):
        save_pca(model, base / p["model"])


def _run_ae(p, base, seed):
    ids, x = _matrix_input(p, base)
    hidden = tuple(int(h) for h in _split(p.get("hidden", "")))
    spec = AutoencoderSpec((x.shape[1],), _int(p, "dim"), hidden,
                           hidden_activation=p["activation"])
    encoder, _, _ = ae_fit(x, spec, _train_config(p, seed))
    write_embeddings(encode_batch(encoder, x, ids), base / p["output"])
    if p.get("model"):
        save_network(encoder, base / p["model"])


def _run_conv_ae(p, base, seed):
    folder = base / p["input"]
    files = sorted(f for f in folder.iterdir() if f.suffix in (".pgm", ".ppm", ".pnm"))
    if not files:
        raise ValueError(f"no .pgm/.ppm images in {folder}")
    images = [read_pnm(f) for f in files]
    spec = AutoencoderSpec.default_conv(images[0].shape, _int(p, "dim"),
                                        output_activation="sigmoid")
    encoder, _, _ = conv_ae_fit(images, spec, _train_config(p, seed))
    write_embeddings(encode_batch(encoder, images, [f.stem for f in files]), base / p["output"])
    if p.get("model"):
        save_network(encoder, base / p["model"])


def _run_word2vec(p, base, seed):
    corpus = read_corpus(base / p["input"], tokenized=_bool(p, "pretokenized"))
    vocab = build_vocab(corpus, _int(p, "min_count"))
    table = word2vec_train(corpus, vocab, p["mode"], _int(p, "window"), _int(p, "dim"),
                           _int(p, "negatives"), _train_config(p, seed))
    write_embeddings(table, base / p["output"])


def _run_doc_embed(p, base, seed):
    corpus = read_corpus(base / p["input"], tokenized=_bool(p, "pretokenized"))
    words = read_embeddings(base / p["embeddings"])
    rows = [doc_centroid(doc, words) for doc in corpus]
    write_embeddings(EmbeddingTable([str(i) for i in range(len(rows))], np.array(rows).reshape(-1, words.dim),
                                    words.dim), base / p["output"])


def _run_rnn_embed(p, base, seed):
    seqs, labels = read_sequences(base / p["input"])
    if labels is None:
        raise ValueError("rnn-embed trains a many-to-one model and needs labelled sequences")
    params = many_to_one_fit(seqs, labels, _train_config(p, seed), _int(p, "hidden"), loss=p["loss"])
    rows = np.array([sequence_embed(s, params) for s in seqs])
    write_embeddings(EmbeddingTable([str(i) for i in range(len(seqs))], rows, params.hidden),
                     base / p["output"])
    if p.get("model"):
        save_network(params.to_network(p["loss"]), base / p["model"])


def _run_crae(p, base, seed):
    pts = read_geo_points(base / p["input"])
    spacing = _float(p, "spacing") if p.get("spacing") else None
    cutoff = _float(p, "cutoff") if p.get("cutoff") else None
    cuboids = build_cuboids(pts, q=_int(p, "q"), spacing=spacing, cutoff=cutoff, mask=_bool(p, "mask"))
    encoder = crae_fit(cuboids, _int(p, "dim"), cfg=_train_config(p, seed))
    rows = np.array([crae_embed(encoder, c) for c in cuboids])
    write_embeddings(EmbeddingTable(pts.ids, rows, rows.shape[1]), base / p["output"])
    if p.get("model"):
        save_network(encoder, base / p["model"])


def _run_assemble(p, base, seed):
    sources, names = [], []
    for name, path, cols in _block_specs(p["blocks"]):
        ids, mat, colnames = _load_rows(base / path, cols)
        sources.append((ids, mat))
        names += [f"{name}.{c}" for c in colnames]
    if sources:
        ids, x = _join(sources)
    else:
        ids, x = read_table(base / p["ids_from"]).ids, None
    ones = np.ones((len(ids), 1))
    values = ones if x is None else np.hstack([ones, x])
    write_table(base / p["output"], ids, ["intercept"] + names, values)


def _family(p):
    return GlmFamily(p["family"], p.get("link") or None)


def _run_glm_fit(p, base, seed):
    ids, design = _read_design(base / p["design"])
    y = _response(p, base, ids)
    model = glm_fit(design, y, _family(p))
    save_glm(model, base / p["model"])
    if p.get("report"):
        (base / p["report"]).write_text(coefficient_report(model), encoding="utf-8")


def _run_glm_predict(p, base, seed):
    model = load_glm(base / p["model"])
    ids, design = _read_design(base / p["design"])
    write_table(base / p["output"], ids, ["mean"], glm_predict(model, design)[:, None])


def _write_report(p, base, report):
    machine = p["format"] == "kv"
    (base / p["output"]).write_text(report.to_text(machine=machine), encoding="utf-8")


def _run_eval_intrinsic(p, base, seed):
    table = read_embeddings(base / p["embeddings"])
    _write_report(p, base, nearest_neighbors(table, p["query"], _int(p, "k")))


def _run_eval_extrinsic(p, base, seed):
    base_ids, base_design = _read_design(base / p["base"])
    aug_ids, aug_design = _read_design(base / p["augmented"])
    if base_ids != aug_ids:
        raise ValueError("base and augmented designs must list the same ids in the same order")
    y = _response(p, base, base_ids)
    report = extrinsic_compare([("x", base_design.values[:, 1:])], [("x", aug_design.values[:, 1:])], y,
                               _family(p), _float(p, "train_fraction"), seed, _int(p, "folds"))
    _write_report(p, base, report)


@dataclass(frozen=True)
class StageSchema:
    required: tuple
    optional: dict
    inputs: tuple  # keys holding input paths
    outputs: tuple  # keys holding output paths
    run: object
    help: str = ""


_TRAIN = {"learning_rate": "0.01", "epochs": "50", "batch_size": "32"}

STAGES = {
    "synth": StageSchema(("generator", "output"), {}, (), ("output",), _run_synth,
                         "write a synthetic dataset"),
    "standardize": StageSchema(("input", "output"), {"columns": ""}, ("input",), ("output",),
                               _run_standardize, "standardise table columns"),
    "pca": StageSchema(("input", "dim", "output"), {"columns": "", "model": ""}, ("input",),
                       ("output", "model"), _run_pca, "PCA embeddings"),
    "ae": StageSchema(("input", "dim", "output"),
                      {"columns": "", "hidden": "", "activation": "tanh", "model": "", **_TRAIN},
                      ("input",), ("output", "model"), _run_ae, "fully connected autoencoder embeddings"),
    "conv-ae": StageSchema(("input", "dim", "output"),
                           {"model": "", "learning_rate": "0.05", "epochs": "20", "batch_size": "8"},
                           ("input",), ("output", "model"), _run_conv_ae,
                           "convolutional autoencoder image embeddings"),
    "word2vec": StageSchema(("input", "output"),
                            {"mode": "skipgram", "window": "2", "dim": "16", "negatives": "5",
                             "min_count": "1", "pretokenized": "false", "learning_rate": "0.025",
                             "epochs": "5", "batch_size": "64"},
                            ("input",), ("output",), _run_word2vec, "word2vec word embeddings"),
    "doc-embed": StageSchema(("input", "embeddings", "output"), {"pretokenized": "false"},
                             ("input", "embeddings"), ("output",), _run_doc_embed,
                             "document centroid embeddings"),
    "rnn-embed": StageSchema(("input", "hidden", "output"),
                             {"loss": "binary-cross-entropy", "model": "", "learning_rate": "0.1",
                              "epochs": "30", "batch_size": "8"},
                             ("input",), ("output", "model"), _run_rnn_embed,
                             "many-to-one RNN sequence embeddings"),
    "crae": StageSchema(("input", "dim", "output"),
                        {"q": "9", "spacing": "", "cutoff": "", "mask": "true", "model": "",
                         "learning_rate": "0.002", "epochs": "40", "batch_size": "16"},
                        ("input",), ("output", "model"), _run_crae, "CRAE geographic embeddings"),
    "assemble": StageSchema(("blocks", "output"), {"ids_from": ""}, ("blocks", "ids_from"), ("output",),
                            _run_assemble, "concatenate feature blocks into a design matrix"),
    "glm-fit": StageSchema(("design", "response", "response_column", "family", "model"),
                           {"link": "", "report": ""}, ("design", "response"), ("model", "report"),
                           _run_glm_fit, "fit a GLM"),
    "glm-predict": StageSchema(("model", "design", "output"), {}, ("model", "design"), ("output",),
                               _run_glm_predict, "predict means from a fitted GLM"),
    "eval-intrinsic": StageSchema(("embeddings", "query", "k", "output"), {"format": "text"},
                                  ("embeddings",), ("output",), _run_eval_intrinsic,
                                  "cosine nearest-neighbour report"),
    "eval-extrinsic": StageSchema(("base", "augmented", "response", "response_column", "family", "output"),
                                  {"link": "", "train_fraction": "0.7", "folds": "0", "format": "text"},
                                  ("base", "augmented", "response"), ("output",), _run_eval_extrinsic,
                                  "holdout deviance of baseline vs augmented GLM"),
}

_NUMERIC = {"dim", "k", "q", "epochs", "batch_size", "hidden", "window", "negatives", "min_count", "folds"}
_REAL = {"learning_rate", "train_fraction", "spacing", "cutoff"}


def _stage_paths(schema, params, keys):
    paths = []
    for key in keys:
        value = params.get(key, "")
        if not value:
            continue
        if key == "blocks":
            paths += [path for _, path, _ in _block_specs(value)]
        elif key == "input":
            paths += _split(value)
        else:
            paths.append(value.strip())
    return paths


def stage_inputs(stage: Stage) -> list:
    return _stage_paths(STAGES[stage.kind], stage.params, STAGES[stage.kind].inputs)


def stage_outputs(stage: Stage) -> list:
    return _stage_paths(STAGES[stage.kind], stage.params, STAGES[stage.kind].outputs)


def _norm(path: str) -> str:
    return str(Path(path))


def parse_config(text: str, base_dir=".") -> PipelineConfig:
    """Parse config text (see module docstring). Raises ValidationError."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"config syntax: {exc}") from None
    cfg = PipelineConfig(base_dir=Path(base_dir))
    for section in parser.sections():
        items = dict(parser.items(section))
        if section == "pipeline":
            unknown = set(items) - {"seed", "manifest"}
            if unknown:
                raise ValidationError(f"unknown [pipeline] keys: {sorted(unknown)}")
            try:
                cfg.seed = int(items.get("seed", "0"))
            except ValueError:
                raise ValidationError("[pipeline] seed must be an integer") from None
            cfg.manifest = items.get("manifest", "")
        elif section.startswith("stage "):
            name = section[len("stage "):].strip()
            if not name or any(s.name == name for s in cfg.stages):
                raise ValidationError(f"stage names must be non-empty and unique: {name!r}")
            kind = items.pop("kind", None)
            if kind is None:
                raise ValidationError(f"stage {name!r} has no kind")
            cfg.stages.append(Stage(name, kind, items))
        else:
            raise ValidationError(f"unknown section [{section}]")
    return cfg


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read config: {exc}") from None
    return parse_config(text, path.parent)


def _check_params(stage: Stage):
    if stage.kind not in STAGES:
        raise ValidationError(f"stage {stage.name!r}: unknown kind {stage.kind!r}")
    schema = STAGES[stage.kind]
    p = stage.params
    missing = [k for k in schema.required if not p.get(k)]
    if missing:
        raise ValidationError(f"stage {stage.name!r} ({stage.kind}) is missing {missing}")
    allowed = set(schema.required) | set(schema.optional) | {"seed"}
    if stage.kind == "synth":
        gen = p["generator"]
        if gen not in _synth.GENERATORS:
            raise ValidationError(f"stage {stage.name!r}: unknown generator {gen!r}")
        allowed |= set(inspect.signature(_generator_fn(gen)).parameters) - {"seed"}
    unknown = set(p) - allowed
    if unknown:
        raise ValidationError(f"stage {stage.name!r} ({stage.kind}): unknown keys {sorted(unknown)}")
    for key, default in schema.optional.items():
        p.setdefault(key, default)
    try:
        for key in p:
            if key in _NUMERIC and p[key] != "":
                int(p[key])
            if key in _REAL and p[key] != "":
                float(p[key])
        if "seed" in p:
            int(p["seed"])
        if "blocks" in p:
            _block_specs(p["blocks"])
        if stage.kind == "synth":
            _coerce_generator_params(p["generator"], {k: v for k, v in p.items()
                                                      if k not in ("generator", "output", "seed")})
        for key in ("mask", "pretokenized"):
            if key in p:
                _bool(p, key)
    except ValueError as exc:
        raise ValidationError(f"stage {stage.name!r}: bad value ({exc})") from None
    if stage.kind == "assemble" and not _block_specs(p["blocks"]) and not p.get("ids_from"):
        raise ValidationError(f"stage {stage.name!r}: an empty block list needs ids_from")
    if p.get("format") and p["format"] not in ("text", "kv"):
        raise ValidationError(f"stage {stage.name!r}: format must be 'text' or 'kv'")


def validate(cfg: PipelineConfig) -> list:
    """Check every stage and return them in execution order.

    Raises ValidationError on missing or unknown parameters, on inputs that
    are neither existing files nor outputs of another stage, on two stages
    writing the same path, and on dependency cycles.
    """
    for stage in cfg.stages:
        _check_params(stage)
    producer = {}
    for stage in cfg.stages:
        for out in stage_outputs(stage):
            key = _norm(out)
            if key in producer:
                raise ValidationError(f"stages {producer[key]!r} and {stage.name!r} both write {out!r}")
            producer[key] = stage.name
    deps = {}
    for stage in cfg.stages:
        deps[stage.name] = set()
        for inp in stage_inputs(stage):
            key = _norm(inp)
            if key in producer:
                if producer[key] == stage.name:
                    raise ValidationError(f"stage {stage.name!r} reads its own output {inp!r}")
                deps[stage.name].add(producer[key])
            elif not (cfg.base_dir / inp).exists():
                raise ValidationError(f"stage {stage.name!r}: input {inp!r} does not exist and "
                                      "no stage produces it")
    # Kahn's algorithm, preferring config order among ready stages
    order, done = [], set()
    pending = [s.name for s in cfg.stages]
    while pending:
        ready = [n for n in pending if deps[n] <= done]
        if not ready:
            raise ValidationError(f"dependency cycle among stages {pending}")
        order.append(ready[0])
        done.add(ready[0])
        pending.remove(ready[0])
    by_name = {s.name: s for s in cfg.stages}
    return [by_name[n] for n in order]


def _stage_seed(global_seed, stage):
    if "seed" in stage.params:
        return int(stage.params["seed"])
    digest = hashlib.sha256(f"{global_seed}:{stage.name}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def run_pipeline(cfg: PipelineConfig, seed=None) -> RunManifest:
    """Validate, then execute every stage; write the manifest if configured.

    ``seed`` overrides the config's global seed. Any stage failure aborts
    the run with a :class:`StageError`.
    """
    if seed is not None:
        cfg.seed = int(seed)
    order = validate(cfg)
    base = cfg.base_dir
    manifest = RunManifest(hashlib.sha256(cfg.canonical().encode()).hexdigest(), cfg.seed)
    for stage in order:
        schema = STAGES[stage.kind]
        inputs = {p: file_checksum(base / p) for p in stage_inputs(stage)}
        for out in stage_outputs(stage):
            target = base / out
            if stage.kind == "synth" and stage.params["generator"] == "square-images":
                target.mkdir(parents=True, exist_ok=True)
            else:
                target.parent.mkdir(parents=True, exist_ok=True)
        start = time.perf_counter()
        try:
            schema.run(stage.params, base, _stage_seed(cfg.seed, stage))
        except Exception as exc:  # noqa: BLE001 - every failure aborts the run
            raise StageError(stage.name, exc) from exc
        outputs = {p: file_checksum(base / p) for p in stage_outputs(stage)}
        manifest.stages.append({"name": stage.name, "kind": stage.kind, "inputs": inputs,
                                "outputs": outputs, "seconds": time.perf_counter() - start})
    if cfg.manifest:
        path = base / cfg.manifest
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(manifest.to_text(), encoding="utf-8")
    return manifest
