"""Run-artifact persistence: trained bundles, training reports, CSV/JSON files.

One training run produces one JSON artifact holding the config echo, the
per-epoch metric history, and every parameter array of the bundle.
Floats ride through JSON via Python's shortest round-trip repr, so a
reloaded bundle evaluates bit-identically to the in-memory one. All
writes go through a temp file and an atomic rename.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict

import numpy as np

from . import diffnet as dn
from . import models as md
from . import relaxation as rx
from . import training as tr
from .channel import ChannelParams, make_constellation
from .errors import ArtifactError

__all__ = [
    "FORMAT_VERSION",
    "save_artifact",
    "load_artifact",
    "bundle_to_dict",
    "bundle_from_dict",
    "write_text_atomic",
]

FORMAT_VERSION = 1


def _net_to_dict(net):
    return {
        "slope": net.slope,
        "layers": [{"w": layer.w.tolist(), "b": layer.b.tolist()} for layer in net.layers],
    }


def _net_from_dict(doc):
    layers = [
        dn.Dense(np.array(layer["w"], dtype=np.float64), np.array(layer["b"], dtype=np.float64))
        for layer in doc["layers"]
    ]
    return dn.Network(layers, slope=float(doc["slope"]))


def bundle_to_dict(bundle):
    doc = {
        "scheme": bundle.scheme,
        "modulation": bundle.constellation.scheme,
        "channel": {
            "sigma_r": bundle.channel.sigma_r,
            "sigma_d": bundle.channel.sigma_d,
            "snr_db": bundle.channel.snr_db,
        },
        "hidden_units": bundle.hidden_units,
        "encoder": {"net": _net_to_dict(bundle.encoder.net), "input_scale": bundle.encoder.input_scale},
        "demod": {"net": _net_to_dict(bundle.demod.net), "input_scale": bundle.demod.input_scale},
    }
    if bundle.entropy.kind == "marginal":
        doc["entropy"] = {"kind": "marginal", "logits": bundle.entropy.logits.tolist()}
    else:
        doc["entropy"] = {
            "kind": "conditional",
            "net": _net_to_dict(bundle.entropy.net),
            "input_scale": bundle.entropy.input_scale,
        }
    if bundle.pre_demod is not None:
        doc["pre_demod"] = {
            "net": _net_to_dict(bundle.pre_demod.net),
            "input_scale": bundle.pre_demod.input_scale,
        }
    return doc


def bundle_from_dict(doc):
    try:
        constellation = make_constellation(doc["modulation"])
        ch = doc["channel"]
        channel = ChannelParams(
            sigma_r=float(ch["sigma_r"]), sigma_d=float(ch["sigma_d"]), snr_db=float(ch["snr_db"])
        )
        encoder = md.EncoderModel(
            net=_net_from_dict(doc["encoder"]["net"]),
            input_scale=float(doc["encoder"]["input_scale"]),
        )
        ent = doc["entropy"]
        if ent["kind"] == "marginal":
            entropy = md.EntropyModel(kind="marginal", logits=np.array(ent["logits"], dtype=np.float64))
        else:
            entropy = md.EntropyModel(
                kind="conditional",
                net=_net_from_dict(ent["net"]),
                input_scale=float(ent["input_scale"]),
            )
        demod = md.DemodulatorModel(
            net=_net_from_dict(doc["demod"]["net"]),
            input_scale=float(doc["demod"]["input_scale"]),
        )
        pre = None
        if doc.get("pre_demod") is not None:
            pre = md.DemodulatorModel(
                net=_net_from_dict(doc["pre_demod"]["net"]),
                input_scale=float(doc["pre_demod"]["input_scale"]),
                takes_y_d=False,
            )
        return md.ModelBundle(
            scheme=doc["scheme"],
            constellation=constellation,
            channel=channel,
            encoder=encoder,
            entropy=entropy,
            demod=demod,
            pre_demod=pre,
            hidden_units=int(doc["hidden_units"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactError(f"malformed bundle document: {exc}") from exc


def _config_to_dict(config):
    doc = asdict(config)
    sched = doc.pop("temperature")
    doc["temperature"] = list(sched.values()) if isinstance(sched, dict) else None
    return doc


def _config_from_dict(doc):
    doc = dict(doc)
    sched = doc.pop("temperature", None)
    if sched is not None:
        sched = rx.TemperatureSchedule(*[float(v) for v in sched])
    return tr.TrainConfig(temperature=sched, **doc)


def _history_to_rows(history):
    return [[st.loss, st.rate_bits, st.distortion_bits] for st in history]


def _history_from_rows(rows):
    return [tr.EpochStats(loss=r[0], rate_bits=r[1], distortion_bits=r[2]) for r in rows]


def save_artifact(path, report):
    from . import __version__

    doc = {
        "format_version": FORMAT_VERSION,
        "code_version": __version__,
        "config": _config_to_dict(report.config),
        "history": _history_to_rows(report.history),
        "pretrain_history": (
            _history_to_rows(report.pretrain_history) if report.pretrain_history else None
        ),
        "bundle": bundle_to_dict(report.bundle),
    }
    write_text_atomic(path, json.dumps(doc, sort_keys=True))


def load_artifact(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"cannot read artifact {path}: {exc}") from exc
    if not isinstance(doc, dict) or "bundle" not in doc:
        raise ArtifactError(f"artifact {path} is not a training-run document")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ArtifactError(
            f"artifact {path} has format_version {doc.get('format_version')!r}; expected {FORMAT_VERSION}"
        )
    try:
        config = _config_from_dict(doc["config"])
        history = _history_from_rows(doc["history"])
        pre = doc.get("pretrain_history")
        pretrain = _history_from_rows(pre) if pre else None
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactError(f"malformed artifact {path}: {exc}") from exc
    bundle = bundle_from_dict(doc["bundle"])
    return tr.TrainReport(config=config, history=history, bundle=bundle, pretrain_history=pretrain)


def write_text_atomic(path, text):
    """Write via temp file + rename so readers never see partial content."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
