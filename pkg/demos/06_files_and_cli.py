# Files, provenance and the command line
#
# Every artifact is written as CSV or a key: value record under a comment
# header with the tool version and a config hash. The same pipelines run from
# the hanle-sp command.

import subprocess
import sys
import tempfile
from pathlib import Path

from hanle_sp import ModelRates, ModifiedModelParams, ScanKind, ScanProtocol, run_grid_map
from hanle_sp.config import RunConfig
from hanle_sp.dataio import export, ingest_map

out = Path(tempfile.mkdtemp())
cfg = RunConfig().with_overrides({"protocol.n_points": "11", "protocol.n_rows": "11"})
m = run_grid_map(ScanProtocol(ScanKind.GRID_XY, (-50, 50), n_points=11, y_range=(-50, 50), n_rows=11),
                 ModifiedModelParams(ModelRates(1.0, 140.0)))
path = export(m, out / "map.csv", "CSV_LONG", config_hash=cfg.hash(), timestamp=False)
print(path.read_text().splitlines()[:4])
print("read back:", ingest_map(path, "CSV_LONG").shape)

cmd = [sys.executable, "-m", "hanle_sp.cli", "widths", "--out", str(out), "--no-timestamp",
       "--set", "rates.gamma2=140", "--set", "protocol.fixed_b_x=20", "--set", "protocol.fixed_b_y=20"]
done = subprocess.run(cmd, capture_output=True, text=True, check=True)
print(Path(done.stdout.strip()).read_text())
