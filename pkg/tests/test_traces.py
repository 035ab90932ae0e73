from __future__ import annotations

import pytest

from geoloc.geo import GeoPosition
from geoloc.traces import (
    PORTO_BBOX,
    BBox,
    InfeasibleTraceError,
    ObjectPlacement,
    Route,
    TraceError,
    dense_walks,
    load_objects,
    load_routes,
    synthesize,
    validate_routes,
    write_objects,
    write_routes,
)
from oracles import haversine_atan2


def _d(a: GeoPosition, b: GeoPosition) -> float:
    return haversine_atan2(a.lat, a.lon, b.lat, b.lon)


def test_round_trip(tmp_path):
    routes, objs = synthesize(7, clients=3, waypoints_per_route=10, objects=8)
    write_routes(routes, tmp_path / "r.csv")
    write_objects(objs, tmp_path / "o.csv")
    assert load_routes(tmp_path / "r.csv") == routes
    assert load_objects(tmp_path / "o.csv") == objs


def test_rows_may_come_in_any_order(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("client_id,seq,lat,lon\nbob,1,41.151,-8.61\nann,0,41.15,-8.61\nbob,0,41.15,-8.61\nann,1,41.15,-8.611\n")
    routes = load_routes(p)
    assert [(r.client_id, r.label) for r in routes] == [(1, "bob"), (2, "ann")]
    assert routes[0].waypoints[0] == GeoPosition(41.15, -8.61)
    assert routes[0].dwell == (1000, 1000)


def test_decimal_parsing_is_exact(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("client_id,seq,lat,lon\n1,0,41.1579,-8.6291\n1,1,41.1579,-8.6291\n")
    assert load_routes(p)[0].waypoints[0] == GeoPosition(41.1579, -8.6291)


def test_empty_file_is_an_error(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("")
    with pytest.raises(TraceError, match="empty"):
        load_routes(p)


def test_header_only_is_an_error(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("client_id,seq,lat,lon\n")
    with pytest.raises(TraceError, match="no data"):
        load_routes(p)


def test_malformed_latitude_names_its_line(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("client_id,seq,lat,lon\n1,0,41.15,-8.61\n1,1,forty,-8.61\n")
    with pytest.raises(TraceError, match=r":3: bad coordinate"):
        load_routes(p)


def test_out_of_range_coordinate(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("client_id,seq,lat,lon\n1,0,91,0\n1,1,41,0\n")
    with pytest.raises(TraceError, match=":2:"):
        load_routes(p)


@pytest.mark.parametrize(
    "body,msg",
    [
        ("1,0,41.15,-8.61\n", "at least 2"),
        ("1,0,41.15,-8.61\n1,0,41.15,-8.61\n", "duplicate seq"),
        ("1,0,41.15,-8.61\n1,1,41.25,-8.61\n", "above the"),
        ("1,0,41.15\n", "expected 4 fields"),
    ],
)
def test_invalid_routes(tmp_path, body, msg):
    p = tmp_path / "r.csv"
    p.write_text("client_id,seq,lat,lon\n" + body)
    with pytest.raises(TraceError, match=msg):
        load_routes(p)


def test_missing_file():
    with pytest.raises(TraceError, match="cannot read"):
        load_routes("/nonexistent/routes.csv")


@pytest.mark.parametrize(
    "body,msg",
    [
        ("1,41.15,-8.61,set\n", "kind"),
        ("1,41.15,-8.61,counter\n1,41.15,-8.61,map\n", "duplicate"),
        ("-1,41.15,-8.61,map\n", "unsigned"),
    ],
)
def test_invalid_objects(tmp_path, body, msg):
    p = tmp_path / "o.csv"
    p.write_text("object_id,lat,lon,kind\n" + body)
    with pytest.raises(TraceError, match=msg):
        load_objects(p)


def test_validate_rejects_bad_dwell():
    p = GeoPosition(41.15, -8.61)
    with pytest.raises(TraceError):
        validate_routes([Route(1, (p, p), (1000, 0))])


def test_bbox_validation():
    with pytest.raises(ValueError):
        BBox(41.2, -8.6, 41.1, -8.5)


# -- synthesis ---------------------------------------------------------------------


def test_synth_defaults_meet_their_promises():
    routes, objs = synthesize(42)
    assert len(routes) == 5 and len(objs) == 50
    assert all(len(r.waypoints) == 40 for r in routes)
    inside = lambda p: PORTO_BBOX.lat_min <= p.lat <= PORTO_BBOX.lat_max and PORTO_BBOX.lon_min <= p.lon <= PORTO_BBOX.lon_max  # noqa: E731
    assert all(inside(w) for r in routes for w in r.waypoints)
    assert all(inside(o.pos) for o in objs)
    # every pair is within max_distance at the same waypoint index at least once
    for i, a in enumerate(routes):
        for b in routes[i + 1 :]:
            assert min(_d(p, q) for p, q in zip(a.waypoints, b.waypoints)) <= 1000
    # every client passes a shared object and an exclusive one
    cover = {o.object_id: {r.client_id for r in routes if any(_d(w, o.pos) <= 1000 for w in r.waypoints)} for o in objs}
    for r in routes:
        near = [o for o, cs in cover.items() if r.client_id in cs]
        assert any(len(cover[o]) >= 2 for o in near)
        assert any(cover[o] == {r.client_id} for o in near)


def test_synth_is_seed_deterministic():
    assert synthesize(3) == synthesize(3)
    assert synthesize(3) != synthesize(4)


def test_single_client_synth():
    routes, objs = synthesize(1, clients=1, waypoints_per_route=5, objects=3)
    assert len(routes) == 1 and len(objs) == 3


def test_synth_infeasible_names_the_fix():
    with pytest.raises(InfeasibleTraceError, match="at least"):
        synthesize(1, clients=10, objects=5)
    with pytest.raises(InfeasibleTraceError):
        synthesize(1, clients=0)


def test_synth_kind_passes_through():
    _, objs = synthesize(2, clients=2, waypoints_per_route=6, objects=4, kind="map")
    assert {o.kind for o in objs} == {"map"}
    assert all(isinstance(o, ObjectPlacement) for o in objs)


def test_dense_walks_stay_in_their_disc():
    routes, objs = dense_walks(3, clients=6, steps=30, spread=800)
    centre = PORTO_BBOX.center
    assert len(routes) == 6 and len(objs) == 10
    assert all(_d(w, centre) <= 800 + 1e-6 for r in routes for w in r.waypoints)
    assert dense_walks(3, clients=6, steps=30, spread=800) == (routes, objs)
    with pytest.raises(InfeasibleTraceError):
        dense_walks(1, steps=1)
