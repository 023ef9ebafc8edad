import base64
import json
from pathlib import Path

import pandas as pd

RUN_FILES = {
    "norms": "norms.csv",
    "switching": "switching.csv",
    "windows": "windows.csv",
    "snapshots": "snapshots.csv",
}


def get_download_link(df, filename="data.csv", text="Download CSV"):
    """
    Generate a download link for a dataframe

    Args:
        df: pandas.DataFrame to download
        filename: Name of the file to download
        text: Text to display for the download link

    Returns:
        str: HTML link for downloading the data
    """
    csv = df.to_csv(index=False)
    b64 = base64.b64encode(csv.encode()).decode()
    href = f'<a href="data:file/csv;base64,{b64}" download="{filename}">{text}</a>'
    return href


def load_run(directory):
    """
    Load the artifacts of one run

    Args:
        directory: Run directory written by ``run_experiment``

    Returns:
        dict: DataFrames under the RUN_FILES keys (None when a file is
            absent), plus ``summary``, ``config`` and ``failed``
    """
    directory = Path(directory)
    if not (directory / "summary.json").is_file():
        raise FileNotFoundError(f"No run summary in {directory}")

    run = {}
    for key, filename in RUN_FILES.items():
        path = directory / filename
        run[key] = pd.read_csv(path) if path.is_file() else None

    run["summary"] = json.loads((directory / "summary.json").read_text(encoding="utf-8"))
    config_path = directory / "config.json"
    run["config"] = json.loads(config_path.read_text(encoding="utf-8")) if config_path.is_file() else None
    run["failed"] = (directory / "FAILED").is_file()
    return run


def list_runs(root):
    """
    Find run directories below a folder

    Args:
        root: Folder to search

    Returns:
        list: Sorted paths of directories containing a summary.json
    """
    root = Path(root)
    if not root.is_dir():
        return []
    return sorted(path.parent for path in root.rglob("summary.json"))
