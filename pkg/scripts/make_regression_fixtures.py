"""Freeze the seeded reference scenarios into tests/data/v1/regression.json.

Run once after any intentional change to the scenarios or the algorithms;
the regression tests then pin the recorded values.
"""

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))
sys.path.insert(0, str(ROOT / "tests"))

from speechcloak.encoder import SurrogateEncoder  # noqa: E402

import scenarios  # noqa: E402


def main():
    encoder = SurrogateEncoder(seed=scenarios.ENCODER_SEED)

    smoke = scenarios.run_smoke(encoder)
    defense = scenarios.run_defense(encoder)
    refinement = scenarios.run_refine_scenario(defense, encoder)
    first = refinement["result"].trace[0]
    last = refinement["result"].trace[-1]

    payload = {
        "stage1_smoke": {
            "first_mean_loss": smoke["first_mean_loss"],
            "last_mean_loss": smoke["last_mean_loss"],
            "final_linf": smoke["trace"][-1]["linf"],
        },
        "stage1_defense": {
            "first_mean_loss": defense["first_mean_loss"],
            "last_mean_loss": defense["last_mean_loss"],
            "srs_values": defense["srs_values"],
        },
        "refine": {
            "initial_ref_raw": first["ref_raw"],
            "final_ref_raw": last["ref_raw"],
            "initial_out_raw": first["out_raw"],
            "final_out_raw": last["out_raw"],
            "srs_before": refinement["srs_before"],
            "srs_after": refinement["srs_after"],
            "chosen_step": refinement["result"].chosen_step,
        },
    }
    out = ROOT / "tests" / "data" / "v1" / "regression.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, indent=2) + "\n")
    print(json.dumps(payload, indent=2))


if __name__ == "__main__":
    main()
