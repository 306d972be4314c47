import math

import numpy as np
import pytest

from hvacrl.thermal import (
    Building,
    BuildingConfig,
    WeatherParseError,
    WeatherRecord,
    ZoneConfig,
    building_5zone,
    generate_weather,
    load_building,
    load_weather,
    save_weather,
)


def single_zone_config(heater_max_power=5000.0):
    zone = ZoneConfig(
        name="box",
        floor_area=20.0,
        thermal_capacitance=2.0e6,
        resistance_to_outdoor=0.01,
        resistance_to_neighbors=(),
        window_solar_gain_factor=2.0,
        heater_max_power=heater_max_power,
        internal_gain_per_person=100.0,
    )
    return BuildingConfig(zones=(zone,))


def euler_oracle(t0, setpoint, t_out, gains, c, g_out, p_max):
    """Independent transcription of the hourly update for one zone."""
    temp = t0
    heat_wh = 0.0
    dt = 60.0
    for _ in range(60):
        passive = gains + g_out * (t_out - temp)
        q = (setpoint - temp) * c / dt - passive
        q = min(max(q, 0.0), p_max)
        heat_wh += q * dt / 3600.0
        temp += (passive + q) * dt / c
    return temp, heat_wh


# ---------------------------------------------------------------------------
# step examples
# ---------------------------------------------------------------------------


def test_thermal_equilibrium():
    b = Building(building_5zone(), initial_temp=15.0)
    states, e_all = b.step([15.0] * 5, WeatherRecord(0, 15.0, 0.0, 0.0), [0] * 5)
    for s in states:
        assert s.temperature == pytest.approx(15.0, abs=1e-12)
        assert s.heat_delivered == 0.0
    # no heating: E_all is the idle base load alone
    assert e_all == pytest.approx(0.5)


def test_heat_flows_toward_cold():
    b = Building(building_5zone(), initial_temp=21.0)
    states, _ = b.step([15.0] * 5, WeatherRecord(0, -20.0, 0.0, 0.0), [0] * 5)
    for s in states:
        assert s.temperature < 21.0


def test_one_step_matches_hand_oracle():
    # Values frozen from the independent Euler transcription above:
    # C=2e6, g_out=100, gains = 2*100 + 0.5*2*50 + 3*100 = 550 W,
    # start 18 C, setpoint 21 C, outdoor -20 C, heater 5 kW.
    b = Building(single_zone_config(), initial_temp=18.0)
    weather = WeatherRecord(0, -20.0, 100.0, 50.0)
    states, e_all = b.step([21.0], weather, [3])
    assert states[0].temperature == pytest.approx(20.88672532826993, abs=1e-9)
    assert states[0].heat_delivered == pytest.approx(5000.0, abs=1e-9)
    assert states[0].energy_consumed == pytest.approx(7.555555555555555, abs=1e-12)
    assert e_all == pytest.approx(7.555555555555555, abs=1e-12)
    # and the live oracle agrees
    temp, heat = euler_oracle(18.0, 21.0, -20.0, 550.0, 2.0e6, 100.0, 5000.0)
    assert states[0].temperature == pytest.approx(temp, abs=1e-12)
    assert states[0].heat_delivered == pytest.approx(heat, abs=1e-12)


def test_one_step_oracle_random_inputs():
    rng = np.random.default_rng(42)
    for _ in range(25):
        t0 = float(rng.uniform(12, 26))
        setpoint = float(rng.uniform(15, 25))
        t_out = float(rng.uniform(-30, 10))
        direct = float(rng.uniform(0, 200))
        diffuse = float(rng.uniform(0, 80))
        occupants = int(rng.integers(0, 6))
        b = Building(single_zone_config(), initial_temp=t0)
        states, _ = b.step([setpoint], WeatherRecord(0, t_out, direct, diffuse), [occupants])
        gains = 2.0 * direct + 0.5 * 2.0 * diffuse + 100.0 * occupants
        temp, heat = euler_oracle(t0, setpoint, t_out, gains, 2.0e6, 100.0, 5000.0)
        assert states[0].temperature == pytest.approx(min(34.0, max(10.0, temp)), abs=1e-12)
        assert states[0].heat_delivered == pytest.approx(heat, abs=1e-9)


def test_heater_saturation_keeps_temp_below_setpoint():
    b = Building(single_zone_config(heater_max_power=3000.0), initial_temp=15.0)
    states, _ = b.step([25.0], WeatherRecord(0, -20.0, 0.0, 0.0), [0])
    assert states[0].heat_delivered == pytest.approx(3000.0)  # clamped all hour
    assert states[0].temperature < 25.0


def test_heat_delivered_bounded_by_max_power():
    b = Building(building_5zone(), initial_temp=15.0)
    weather = generate_weather(seed=1, days=3)
    rng = np.random.default_rng(3)
    for t in range(72):
        setpoints = list(rng.uniform(15.0, 25.0, size=5))
        states, _ = b.step(setpoints, weather[t], [0, 2, 5, 0, 10])
        for s, zone in zip(states, building_5zone().zones):
            assert 0.0 <= s.heat_delivered <= zone.heater_max_power + 1e-9


def test_energy_never_below_base_load():
    b = Building(building_5zone(), initial_temp=20.0)
    weather = generate_weather(seed=5, days=4)
    rng = np.random.default_rng(7)
    for t in range(96):
        setpoints = list(rng.uniform(15.0, 25.0, size=5))
        states, e_all = b.step(setpoints, weather[t], [0, 0, 3, 1, 8])
        assert e_all >= 0.5 - 1e-12
        assert all(s.energy_consumed >= 0.0 for s in states)


def test_free_cooling_monotone_relaxation():
    # Outdoor above the setpoint floor, so heaters never engage.
    b = Building(building_5zone(), initial_temp=30.0)
    t_out = 15.6
    weather = WeatherRecord(0, t_out, 0.0, 0.0)
    prev = b.temperatures
    for _ in range(500):
        states, _ = b.step([15.0] * 5, weather, [0] * 5)
        now = b.temperatures
        assert np.all(now < prev)
        assert all(s.heat_delivered == 0.0 for s in states)
        prev = now
    assert np.all(np.abs(prev - t_out) < 0.5)


def test_energy_monotone_in_setpoint():
    weather = generate_weather(seed=2, days=2)
    rng = np.random.default_rng(11)
    for trial in range(10):
        b1 = Building(building_5zone(), initial_temp=16.0)
        b2 = Building(building_5zone(), initial_temp=16.0)
        # identical warm-up so both start the probe step in the same state
        for t in range(10):
            sp = list(rng.uniform(15.0, 23.0, size=5))
            occ = [int(x) for x in rng.integers(0, 8, size=5)]
            b1.step(sp, weather[t], occ)
            b2.step(sp, weather[t], occ)
        base_sp = list(rng.uniform(15.0, 23.0, size=5))
        k = int(rng.integers(0, 5))
        raised = list(base_sp)
        raised[k] = min(25.0, base_sp[k] + float(rng.uniform(0.5, 4.0)))
        occ = [int(x) for x in rng.integers(0, 8, size=5)]
        _, e_lo = b1.step(base_sp, weather[10], occ)
        _, e_hi = b2.step(raised, weather[10], occ)
        assert e_hi >= e_lo - 1e-12


def test_interior_exchange_conserves_energy():
    # Two interior-only zones, no envelope, heaters off: total thermal
    # energy C1*T1 + C2*T2 must be conserved across interior links.
    z0 = ZoneConfig("a", 10.0, 1.5e6, None, ((1, 0.02),), 0.0, 1000.0)
    z1 = ZoneConfig("b", 10.0, 3.0e6, None, ((0, 0.02),), 0.0, 1000.0)
    b = Building(BuildingConfig(zones=(z0, z1)), initial_temp=20.0)
    b._temps[:] = [30.0, 20.0]
    weather = WeatherRecord(0, 15.0, 0.0, 0.0)
    total0 = 1.5e6 * 30.0 + 3.0e6 * 20.0
    for _ in range(50):
        states, _ = b.step([15.0, 15.0], weather, [0, 0])
        assert all(s.heat_delivered == 0.0 for s in states)
        total = float(np.dot([1.5e6, 3.0e6], b.temperatures))
        assert abs(total - total0) / total0 < 1e-9


def test_observation_clamp_leaves_physics_unclamped():
    b = Building(single_zone_config(), initial_temp=18.0)
    weather = WeatherRecord(0, -40.0, 0.0, 0.0)
    b._temps[:] = [60.0]  # overheated zone still above the clamp after one hour
    states, _ = b.step([15.0], weather, [0])
    assert states[0].temperature <= 34.0
    assert b.temperatures[0] > 34.0  # true state still above the clamp


def test_step_validates_inputs():
    b = Building(building_5zone())
    weather = WeatherRecord(0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        b.step([21.0] * 4, weather, [0] * 5)  # wrong setpoint count
    with pytest.raises(ValueError):
        b.step([21.0] * 5, weather, [0] * 4)  # wrong occupancy count
    with pytest.raises(ValueError):
        b.step([14.0] + [21.0] * 4, weather, [0] * 5)  # setpoint below range
    with pytest.raises(ValueError):
        b.step([21.0] * 5, weather, [-1] + [0] * 4)


def test_weather_record_validation():
    with pytest.raises(ValueError):
        WeatherRecord(0, float("nan"), 0.0, 0.0)
    with pytest.raises(ValueError):
        WeatherRecord(0, -80.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        WeatherRecord(0, 0.0, -5.0, 0.0)


def test_asymmetric_links_rejected():
    z0 = ZoneConfig("a", 10.0, 1e6, 0.01, ((1, 0.02),), 0.0, 1000.0)
    z1 = ZoneConfig("b", 10.0, 1e6, 0.01, ((0, 0.03),), 0.0, 1000.0)
    with pytest.raises(ValueError, match="asymmetric"):
        BuildingConfig(zones=(z0, z1))


# ---------------------------------------------------------------------------
# weather generation and files
# ---------------------------------------------------------------------------


def test_synthetic_weather_length():
    assert len(generate_weather(seed=0, days=31)) == 744


def test_synthetic_weather_night_has_no_solar():
    records = generate_weather(seed=4, days=7)
    for rec in records:
        hod = rec.timestamp % 24
        if hod < 10 or hod > 16:
            assert rec.direct_solar == 0.0
            assert rec.diffuse_solar == 0.0
    # the stated example: 03:00 is dark
    assert records[3].direct_solar == 0.0


def test_synthetic_weather_profile_shape():
    records = generate_weather(seed=8, days=31)
    temps = [r.outdoor_temp for r in records]
    assert -60.0 <= min(temps) and max(temps) <= 60.0
    assert np.mean(temps) == pytest.approx(-15.0, abs=3.0)
    # daily cycle: 15:00 warmer than 03:00 on every day
    for day in range(31):
        assert records[day * 24 + 15].outdoor_temp > records[day * 24 + 3].outdoor_temp
    assert max(r.direct_solar for r in records) > 0


def test_synthetic_weather_deterministic():
    assert generate_weather(seed=9, days=5) == generate_weather(seed=9, days=5)
    assert generate_weather(seed=9, days=5) != generate_weather(seed=10, days=5)


def test_weather_round_trip(tmp_path):
    records = generate_weather(seed=3, days=4)
    path = tmp_path / "weather.csv"
    save_weather(records, path)
    assert load_weather(path) == records


def test_weather_hour_gap_names_row(tmp_path):
    path = tmp_path / "gap.csv"
    path.write_text(
        "hour,outdoor_temp,direct_solar,diffuse_solar\n"
        "0,-10.0,0,0\n"
        "1,-11.0,0,0\n"
        "3,-12.0,0,0\n"
    )
    with pytest.raises(WeatherParseError, match="row 3"):
        load_weather(path)


def test_weather_missing_columns(tmp_path):
    path = tmp_path / "cols.csv"
    path.write_text("hour,outdoor_temp\n0,-10.0\n")
    with pytest.raises(WeatherParseError, match="header"):
        load_weather(path)


def test_weather_non_finite_value(tmp_path):
    path = tmp_path / "nan.csv"
    path.write_text(
        "hour,outdoor_temp,direct_solar,diffuse_solar\n"
        "0,-10.0,0,0\n"
        "1,nan,0,0\n"
    )
    with pytest.raises(WeatherParseError, match="row 2"):
        load_weather(path)


def test_building_json_round_trip(tmp_path):
    import json

    cfg = {
        "heater_efficiency": 0.85,
        "base_load_active_kwh": 1.5,
        "base_load_idle_kwh": 0.25,
        "zones": [
            {
                "name": "left",
                "floor_area": 25.0,
                "thermal_capacitance": 3.0e6,
                "resistance_to_outdoor": 0.008,
                "resistance_to_neighbors": [[1, 0.02]],
                "window_solar_gain_factor": 1.5,
                "heater_max_power": 6000.0,
            },
            {
                "name": "right",
                "floor_area": 25.0,
                "thermal_capacitance": 3.0e6,
                "resistance_to_outdoor": None,
                "resistance_to_neighbors": [[0, 0.02]],
                "heater_max_power": 6000.0,
            },
        ],
    }
    path = tmp_path / "building.json"
    path.write_text(json.dumps(cfg))
    loaded = load_building(path)
    assert loaded.zone_names == ("left", "right")
    assert loaded.heater_efficiency == 0.85
    assert loaded.zones[1].resistance_to_outdoor is None
    Building(loaded).step([18.0, 18.0], WeatherRecord(0, -5.0, 50.0, 10.0), [1, 0])
