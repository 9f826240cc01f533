import os
import json
import typing
import pathlib


class TooManyFilesError(Exception):
    """A bundle directory holds more than one manifest candidate."""

    def __init__(self, files: typing.Sequence[str]):
        super().__init__()
        self.files = list(files)

    def __str__(self):
        return "expected a single manifest, found {}".format(", ".join(self.files))


def find_json_file(search_directory: typing.Union[str, os.PathLike]) -> str:
    """Path of the one manifest (.json file) of a bundle directory.

    Subdirectories are not searched.

    Raises:
        FileNotFoundError: the directory holds no JSON file.
        TooManyFilesError: it holds several.
    """
    candidates = sorted(
        name
        for name in os.listdir(search_directory)
        if name.endswith(".json")
        and os.path.isfile(os.path.join(search_directory, name))
    )
    if not candidates:
        raise FileNotFoundError("no manifest in {}".format(search_directory))
    if len(candidates) > 1:
        raise TooManyFilesError(candidates)
    return os.path.join(search_directory, candidates[0])


def manifest_path(path: typing.Union[str, os.PathLike]) -> pathlib.Path:
    """The manifest file designated by path: path itself if it is a file, the
    single JSON file it contains if it is a directory."""
    path = pathlib.Path(path).expanduser()
    if path.is_dir():
        return pathlib.Path(find_json_file(path))
    if not path.is_file():
        raise FileNotFoundError("{} (manifest)".format(path))
    return path


def read_json(
    path: typing.Union[str, os.PathLike], expected_keys: typing.Iterable[str] = ()
) -> typing.Dict[str, typing.Any]:
    """Parse a JSON file whose top level is an object.

    Raises:
        FileNotFoundError: if the file does not exist.
        ValueError: if the file is not valid JSON or not an object.
        KeyError: if one of the expected keys is missing.
    """
    with open(path) as f:
        try:
            conf = json.load(f)
        except json.JSONDecodeError as e:
            raise ValueError("failed to parse {}: {}".format(path, e)) from e

    if not isinstance(conf, dict):
        raise ValueError("{}: expected a JSON object at top level".format(path))

    # checking all expected keys are there
    for key in expected_keys:
        if key not in conf.keys():
            raise KeyError("{} does not have the required key {}".format(path, key))

    return conf


def resolve_path(
    base_directory: typing.Union[str, os.PathLike], value: str, key: str
) -> pathlib.Path:
    """Path of an existing file referenced from a JSON file.

    Relative paths are resolved against base_directory (the directory of the
    referencing file); '~' is expanded.

    Raises:
        FileNotFoundError: if the referenced file does not exist.
    """
    path = pathlib.Path(value).expanduser()
    if not path.is_absolute():
        path = pathlib.Path(base_directory) / path
    if not path.is_file():
        raise FileNotFoundError("{} (for key: {})".format(value, key))
    return path
