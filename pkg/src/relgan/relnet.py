"""Generator and relation discriminator built from plain MLPs.

The discriminator is a shared embedding module (EM) applied to each element
of a pair, followed by a relation module (RM) over the concatenated features.
An empty EM reproduces the "no EM" ablation: raw samples are concatenated
and fed straight into the RM.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ArtifactIOError, ConfigError, DimensionError
from .grad_core import Tensor, add_bias, concat_feature, leaky_relu, matmul, tanh

HIDDEN_ACTIVATIONS = ("leaky_relu", "tanh")
OUTPUT_ACTIVATIONS = ("linear", "tanh", "leaky_relu")
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple
    hidden_activation: str = "leaky_relu"
    output_activation: str = "linear"
    leaky_alpha: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(n) for n in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ConfigError("MlpSpec.layer_sizes needs at least input and output widths")
        if any(n < 1 for n in self.layer_sizes):
            raise ConfigError(f"MlpSpec.layer_sizes must be >= 1, got {list(self.layer_sizes)}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ConfigError(f"unknown hidden_activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ConfigError(f"unknown output_activation {self.output_activation!r}")
        if not 0.0 < self.leaky_alpha < 1.0:
            raise ConfigError(f"leaky_alpha must lie in (0, 1), got {self.leaky_alpha}")

    @property
    def param_count(self):
        s = self.layer_sizes
        return sum(a * b + b for a, b in zip(s[:-1], s[1:]))


class Mlp:
    """Weights stored as [in, out] so a layer is ``x @ W + b``."""

    def __init__(self, spec, params):
        if len(params) != 2 * (len(spec.layer_sizes) - 1):
            raise ConfigError("Mlp: parameter list does not match spec")
        self.spec = spec
        self.params = list(params)

    def _act(self, h, kind):
        if kind == "leaky_relu":
            return leaky_relu(h, self.spec.leaky_alpha)
        if kind == "tanh":
            return tanh(h)
        return h

    def __call__(self, x):
        if x.data.ndim != 2 or x.shape[1] != self.spec.layer_sizes[0]:
            raise DimensionError(
                f"mlp: expected input [B, {self.spec.layer_sizes[0]}], got {list(x.shape)}"
            )
        n_layers = len(self.params) // 2
        h = x
        for i in range(n_layers):
            h = add_bias(matmul(h, self.params[2 * i]), self.params[2 * i + 1])
            last = i == n_layers - 1
            h = self._act(h, self.spec.output_activation if last else self.spec.hidden_activation)
        return h

    @property
    def in_dim(self):
        return self.spec.layer_sizes[0]

    @property
    def out_dim(self):
        return self.spec.layer_sizes[-1]


def mlp_init(spec: MlpSpec, rng: np.random.Generator) -> Mlp:
    """He-normal weights for leaky_relu nets, Xavier-normal for tanh; zero biases."""
    params = []
    sizes = spec.layer_sizes
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        if spec.hidden_activation == "leaky_relu":
            std = np.sqrt(2.0 / fan_in)
        else:
            std = np.sqrt(2.0 / (fan_in + fan_out))
        params.append(Tensor(rng.normal(0.0, std, size=(fan_in, fan_out)), True, f"W{i}"))
        params.append(Tensor(np.zeros(fan_out), True, f"b{i}"))
    return Mlp(spec, params)


class RelationDiscriminator:
    """D(x1, x2) = RM(concat(EM(x1), EM(x2))), one EM shared by both arguments.

    The score is not symmetric in its arguments; asymmetric pairs are always
    passed real-first.
    """

    def __init__(self, em, rm):
        em_out = em.out_dim if em is not None else None
        if em is not None and rm.in_dim != 2 * em_out:
            raise ConfigError(f"relation module input {rm.in_dim} != 2 x embedding width {em_out}")
        if rm.out_dim != 1:
            raise ConfigError("relation module must output a single score")
        self.em = em
        self.rm = rm

    @property
    def params(self):
        return (self.em.params if self.em is not None else []) + self.rm.params

    def set_params(self, params):
        k = len(self.em.params) if self.em is not None else 0
        if self.em is not None:
            self.em.params = list(params[:k])
        self.rm.params = list(params[k:])

    @property
    def split(self):
        """The "n+m" layer split between embedding and relation modules."""
        em_depth = len(self.em.params) // 2 if self.em is not None else 0
        return em_depth, len(self.rm.params) // 2

    def embed(self, x):
        return self.em(x) if self.em is not None else x

    def relate(self, e1, e2):
        return self.rm(concat_feature(e1, e2))

    def __call__(self, x1, x2):
        return discriminate_pair(self, x1, x2)


def discriminate_pair(d, x1, x2):
    """Relation score per row, shape [B, 1]."""
    if x1.shape != x2.shape:
        raise DimensionError(f"discriminate_pair: shapes differ, {list(x1.shape)} vs {list(x2.shape)}")
    return d.relate(d.embed(x1), d.embed(x2))


class Critic:
    """Single-input discriminator used by the baseline losses."""

    def __init__(self, net):
        if net.out_dim != 1:
            raise ConfigError("critic must output a single score")
        self.net = net

    @property
    def params(self):
        return self.net.params

    def set_params(self, params):
        self.net.params = list(params)

    def __call__(self, x):
        return self.net(x)


class Generator:
    def __init__(self, net):
        self.net = net

    @property
    def latent_dim(self):
        return self.net.in_dim

    @property
    def data_dim(self):
        return self.net.out_dim

    @property
    def params(self):
        return self.net.params

    def set_params(self, params):
        self.net.params = list(params)

    def __call__(self, z):
        return generate(self, z)


def generate(g, z):
    if not np.all(np.isfinite(z.data)):
        raise ConfigError("generate: latent batch contains non-finite values")
    return g.net(z)


def sample_latent(rng, batch, latent_dim):
    if batch < 1 or latent_dim < 1:
        raise ConfigError("sample_latent: batch and latent_dim must be >= 1")
    return Tensor._wrap(rng.standard_normal((batch, latent_dim)))


def build_relation_discriminator(rng, data_dim=2, em_hidden=(128, 128), rm_hidden=(128,),
                                 alpha=0.2, hidden_activation="leaky_relu"):
    """EM = [d, *em_hidden], RM = [2e, *rm_hidden, 1]; empty ``em_hidden`` means no EM."""
    em = None
    feat = data_dim
    if em_hidden:
        em_spec = MlpSpec((data_dim, *em_hidden), hidden_activation, hidden_activation, alpha)
        em = mlp_init(em_spec, rng)
        feat = em_hidden[-1]
    rm_spec = MlpSpec((2 * feat, *rm_hidden, 1), hidden_activation, "linear", alpha)
    return RelationDiscriminator(em, mlp_init(rm_spec, rng))


def build_critic(rng, data_dim=2, em_hidden=(128, 128), rm_hidden=(128,), alpha=0.2,
                 hidden_activation="leaky_relu"):
    spec = MlpSpec((data_dim, *em_hidden, *rm_hidden, 1), hidden_activation, "linear", alpha)
    return Critic(mlp_init(spec, rng))


def build_generator(rng, latent_dim=8, data_dim=2, hidden=(128, 128), alpha=0.2,
                    hidden_activation="leaky_relu"):
    spec = MlpSpec((latent_dim, *hidden, data_dim), hidden_activation, "linear", alpha)
    return Generator(mlp_init(spec, rng))


# -- checkpoints ------------------------------------------------------------

def _mlp_header(m):
    return None if m is None else asdict(m.spec)


def _mlps_of(module):
    if isinstance(module, RelationDiscriminator):
        return {"em": module.em, "rm": module.rm}
    if isinstance(module, (Generator, Critic)):
        return {"net": module.net}
    if isinstance(module, Mlp):
        return {"net": module}
    raise ConfigError(f"cannot checkpoint {type(module).__name__}")


def save_checkpoint(path, modules, arrays=None, meta=None):
    """Write ``{name: module}`` plus loose arrays to an ``.npz`` with a JSON header.

    Values are stored as raw float64, so a round trip is bit-exact.
    """
    header = {"format": "relgan-checkpoint", "version": CHECKPOINT_VERSION,
              "modules": {}, "meta": meta or {}}
    payload = {}
    for name, module in modules.items():
        entry = {"type": type(module).__name__, "mlps": {}}
        for part, mlp in _mlps_of(module).items():
            entry["mlps"][part] = _mlp_header(mlp)
            if mlp is None:
                continue
            for i, p in enumerate(mlp.params):
                payload[f"{name}/{part}/{i}"] = p.data
        header["modules"][name] = entry
    for key, arr in (arrays or {}).items():
        payload[f"extra/{key}"] = np.asarray(arr)
    payload["__header__"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            np.savez(fh, **payload)
    except OSError as exc:
        raise ArtifactIOError(path, exc.strerror or str(exc)) from exc
    return path


def _mlp_from(spec_dict, name, part, data):
    if spec_dict is None:
        return None
    spec = MlpSpec(**spec_dict)
    n = 2 * (len(spec.layer_sizes) - 1)
    params = []
    for i in range(n):
        arr = data[f"{name}/{part}/{i}"]
        params.append(Tensor(arr, True, f"{'W' if i % 2 == 0 else 'b'}{i // 2}"))
    return Mlp(spec, params)


def load_checkpoint(path):
    """Inverse of ``save_checkpoint``: returns ``(modules, arrays, meta)``."""
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(bytes(data["__header__"]).decode())
            if header.get("format") != "relgan-checkpoint":
                raise ArtifactIOError(path, "not a relgan checkpoint")
            if header.get("version") != CHECKPOINT_VERSION:
                raise ArtifactIOError(path, f"unsupported checkpoint version {header.get('version')}")
            modules = {}
            for name, entry in header["modules"].items():
                mlps = {part: _mlp_from(s, name, part, data) for part, s in entry["mlps"].items()}
                kind = entry["type"]
                if kind == "RelationDiscriminator":
                    modules[name] = RelationDiscriminator(mlps["em"], mlps["rm"])
                elif kind == "Generator":
                    modules[name] = Generator(mlps["net"])
                elif kind == "Critic":
                    modules[name] = Critic(mlps["net"])
                else:
                    modules[name] = mlps["net"]
            arrays = {k[len("extra/"):]: data[k] for k in data.files if k.startswith("extra/")}
    except OSError as exc:
        raise ArtifactIOError(path, exc.strerror or str(exc)) from exc
    except KeyError as exc:
        raise ArtifactIOError(path, f"missing entry {exc}") from exc
    return modules, arrays, header["meta"]
