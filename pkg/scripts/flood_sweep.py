"""Count flood transmissions against overlay links on dense random walks.

Prints one line per (clients, spread) setting with the number of floods,
how many used more transmissions than there were links, and the worst case.
"""

from __future__ import annotations

import argparse
import sys

from geoloc.geo import ProtocolConfig
from geoloc.nodes import OverlayMode
from geoloc.scenarios import ScenarioConfig, run_checkin
from geoloc.traces import dense_walks


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--outages", default="3000,8000,20000")
    ap.add_argument("--settings", default="8:1500,12:1000,16:1200", help="clients:spread_m pairs")
    args = ap.parse_args()

    outages = [int(x) for x in args.outages.split(",")]
    for pair in args.settings.split(","):
        clients, spread = (int(x) for x in pair.split(":"))
        floods = over = 0
        worst = (0, 0)
        for seed in range(1, args.seeds + 1):
            routes, objs = dense_walks(seed, clients=clients, spread=spread)
            for at in outages:
                cfg = ScenarioConfig(protocol=ProtocolConfig().with_overrides(seed=seed), signalling_outage_at=at)
                for tx, links in run_checkin(OverlayMode.GLO_PARTIAL, routes, objs, cfg).metrics.floods():
                    floods += 1
                    if tx > links:
                        over += 1
                        if tx - links > worst[0] - worst[1]:
                            worst = (tx, links)
        print(f"clients={clients} spread_m={spread} floods={floods} above_links={over} "
              f"worst_tx={worst[0]} worst_links={worst[1]}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
