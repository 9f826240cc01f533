import dataclasses
import logging
import math
import os
import site
import sys
import typing as t

import omegaconf as oc
import variconf

from .errors import ConfigError, InputError
from .priors import RobotFootprint
from .sampler import IngestSettings


def _knob(default: t.Any, help: str, reference: str = "", **kwargs) -> t.Any:
    metadata = {"help": help}
    if reference:
        metadata["reference"] = reference
    if isinstance(default, (list, dict)):
        return dataclasses.field(
            default_factory=lambda: type(default)(default), metadata=metadata, **kwargs
        )
    return dataclasses.field(default=default, metadata=metadata, **kwargs)


@dataclasses.dataclass
class RunConfig:
    """Configuration of a batch run (all subcommands).

    Scenes are named by the keys of scene_files (synthetic scenes) and
    manifests (externally generated samples); every output of a scene goes to
    output_dir/<scene>.
    """

    # NOTE: OmegaConf only supports primitive types, enums and basic containers,
    # optional values are expressed with t.Optional.

    scene_files: t.Dict[str, str] = _knob({}, "scene name -> synthetic scene file")
    manifests: t.Dict[str, str] = _knob({}, "scene name -> sample set manifest")
    ground_truth: str = _knob(
        "",
        "ground truth distribution file used for every scene, or directory "
        "holding one <scene>.txt per scene",
    )
    output_dir: str = _knob("output", "root directory of every output")

    seed: int = _knob(
        1234,
        "seed of every random draw: sample i uses seed + i, RANSAC seed, "
        "roadmap sampling seed + 1",
        "global seed 1234 incremented by one per sample",
    )
    n_samples: int = _knob(
        100, "number of synthetic samples per scene", "100 samples per scene"
    )

    max_depth: float = _knob(20.0, "depth cull (m)", "culled beyond depths of 20 m")
    outlier_radius: float = _knob(
        0.1, "outlier removal radius (m)", "radius outlier removal, radius 0.1 m"
    )
    outlier_neighbors: int = _knob(
        10, "outlier removal neighbor count", "radius outlier removal, 10 neighbors"
    )
    trim_band: float = _knob(
        0.20, "height above the floor trimmed away (m)", "trim up to 20 cm above floor"
    )
    ransac_threshold: float = _knob(
        0.01, "RANSAC inlier threshold (m)", "max floor fit RMSE of 0.01 m"
    )
    ransac_iters: int = _knob(1000, "RANSAC hypotheses")
    icp: bool = _knob(False, "translate every sample onto the observed cloud (ICP)")
    icp_iters: int = _knob(30, "ICP iterations")
    icp_tolerance: float = _knob(1e-6, "ICP convergence threshold (m)")
    misalignment_tolerance: float = _knob(
        0.1, "largest median |z| of the floor points of an aligned sample (m)"
    )
    camera_height_min: float = _knob(
        1.0, "camera height sanity band, lower end (m)", "camera heights 1.38-1.54 m"
    )
    camera_height_max: float = _knob(
        2.0, "camera height sanity band, upper end (m)", "camera heights 1.38-1.54 m"
    )

    footprint_radius: float = _knob(0.25, "robot footprint radius (m)")
    z_min: float = _knob(0.20, "obstacle height band, lower end (m)")
    z_max: float = _knob(1.50, "obstacle height band, upper end (m)")
    target_radius: float = _knob(
        1.0, "target acquisition radius (m)", "1 m target acquisition radius"
    )
    n_vertices: int = _knob(2000, "roadmap vertices", "PRM* with 2000 vertices")
    gamma: t.Optional[float] = _knob(
        None, "PRM* connection constant (default: from the support area)"
    )
    step: float = _knob(0.05, "edge densification step (m)")
    angular_weight: float = _knob(
        0.0, "meters per radian of heading change in path lengths"
    )
    frontier_cap: int = _knob(2_000_000, "search states before giving up")
    labels: t.List[int] = _knob(
        [], "labels to plan for (default: the vocabulary without floor)"
    )

    smoothing: bool = _knob(True, "smooth zero detection masses before KL")
    epsilon: float = _knob(1e-6, "smoothing mass per label")
    kl_base: str = _knob("e", "KL logarithm base, 'e' or '2'")

    log_level: str = _knob("INFO", "logging level")

    # implement __{get,set}item__ to add dictionary-like access
    def __getitem__(self, key: str) -> t.Any:
        return getattr(self, key)

    def __setitem__(self, key: str, value: t.Any) -> None:
        setattr(self, key, value)

    def validate(self) -> None:
        """Raises:
        ConfigError: if a knob is outside its valid range.
        """
        positive = (
            "max_depth",
            "outlier_radius",
            "ransac_threshold",
            "ransac_iters",
            "footprint_radius",
            "target_radius",
            "step",
            "epsilon",
            "n_samples",
            "frontier_cap",
        )
        for key in positive:
            if not self[key] > 0:
                raise ConfigError(key, "must be positive (got {})".format(self[key]))
        non_negative = (
            "outlier_neighbors",
            "trim_band",
            "icp_iters",
            "icp_tolerance",
            "misalignment_tolerance",
            "angular_weight",
        )
        for key in non_negative:
            if self[key] < 0:
                raise ConfigError(
                    key, "must be non negative (got {})".format(self[key])
                )
        if self.n_vertices < 2:
            raise ConfigError("n_vertices", "at least 2 vertices are required")
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigError("gamma", "must be positive")
        if not self.z_min < self.z_max:
            raise ConfigError("z_max", "obstacle height band is empty")
        if not self.camera_height_min <= self.camera_height_max:
            raise ConfigError("camera_height_max", "camera height band is empty")
        if self.kl_base not in ("e", "2"):
            raise ConfigError("kl_base", "must be 'e' or '2'")
        if not isinstance(logging.getLevelName(self.log_level.upper()), int):
            raise ConfigError("log_level", "unknown level {}".format(self.log_level))

    @property
    def log_base(self) -> float:
        return math.e if self.kl_base == "e" else 2.0

    def footprint(self) -> RobotFootprint:
        return RobotFootprint(self.footprint_radius, self.z_min, self.z_max)

    def ingest_settings(self) -> IngestSettings:
        return IngestSettings(
            max_depth=self.max_depth,
            outlier_radius=self.outlier_radius,
            outlier_neighbors=self.outlier_neighbors,
            trim_band=self.trim_band,
            ransac_threshold=self.ransac_threshold,
            ransac_iters=self.ransac_iters,
            seed=self.seed,
            icp_iters=self.icp_iters,
            icp_tolerance=self.icp_tolerance,
            misalignment_tolerance=self.misalignment_tolerance,
            camera_height_band=(self.camera_height_min, self.camera_height_max),
            icp=True if self.icp else None,
        )

    def scenes(self) -> t.List[str]:
        return sorted(set(self.scene_files) | set(self.manifests))

    @staticmethod
    def load(
        jsonpath: t.Optional[t.Union[str, os.PathLike]] = None,
        overrides: t.Sequence[str] = (),
    ) -> "RunConfig":
        """Construct the config from an optional JSON file and "key=value"
        overrides.

        Raises:
            InputError: if the file can not be read.
            ConfigError: if a key is unknown, a value has the wrong type or is
                out of range.
        """
        wconf = variconf.WConf(RunConfig)
        try:
            if jsonpath is not None:
                wconf.load_file(jsonpath)
            wconf.load_dotlist(list(overrides))
            cfg = t.cast(RunConfig, oc.OmegaConf.to_object(wconf.cfg))
        except FileNotFoundError:
            raise InputError(jsonpath, "config file not found")
        except oc.errors.OmegaConfBaseException as e:
            key = getattr(e, "full_key", None) or "config"
            raise ConfigError(str(key), str(e).splitlines()[0]) from e
        except ValueError as e:
            raise ConfigError("config", str(e)) from e
        cfg.validate()
        return cfg

    @staticmethod
    def from_json(jsonpath: t.Union[str, os.PathLike]) -> "RunConfig":
        """Construct config from JSON file."""
        return RunConfig.load(jsonpath)

    @staticmethod
    def default_path() -> str:
        """Get path to default config file.

        Raises:
            FileNotFoundError: if no default config file is found.
        """
        global_install = os.path.join(
            sys.prefix,
            "local",
            "spatio_semantic_priors_config",
            "run_default.json",
        )
        assert site.USER_BASE is not None
        local_install = os.path.join(
            site.USER_BASE,
            "spatio_semantic_priors_config",
            "run_default.json",
        )

        if os.path.isfile(local_install):
            return local_install
        if os.path.isfile(global_install):
            return global_install

        raise FileNotFoundError("No default config file found.")

    @staticmethod
    def help_text() -> str:
        """One line per knob: name, default, help and reference value."""
        lines = []
        for field in dataclasses.fields(RunConfig):
            if field.default is not dataclasses.MISSING:
                default = field.default
            else:
                default = field.default_factory()  # type: ignore
            line = "  {} (default: {}): {}".format(
                field.name, default, field.metadata.get("help", "")
            )
            if "reference" in field.metadata:
                line += " [reference: {}]".format(field.metadata["reference"])
            lines.append(line)
        return "\n".join(lines)
