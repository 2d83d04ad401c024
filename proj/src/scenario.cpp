#include "amod/scenario.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "amod/rng.hpp"

namespace amod {

namespace {

using nlohmann::json;

void check(bool cond, const std::string& field, const std::string& what) {
  if (!cond) throw ValidationError(field + ": " + what);
}

}  // namespace

void Scenario::validate() const {
  const int n = n_stations;
  check(n >= 1, "n_stations", "must be >= 1");
  check(fleet_size >= 1, "fleet_size", "must be >= 1");
  check(episode_len >= 1, "episode_len", "must be >= 1");
  check(plan_horizon >= 1, "plan_horizon", "must be >= 1");
  check(step_minutes > 0.0, "step_minutes", "must be > 0");
  check(cost_per_step_cents >= 0, "cost_per_step", "must be >= 0");

  check(travel_time.rows() == n && travel_time.cols() == n, "travel_time",
        "must be n_stations x n_stations");
  for (int i = 0; i < n; ++i) {
    check(travel_time(i, i) == 0, "travel_time", "diagonal must be 0");
    for (int j = 0; j < n; ++j)
      check(travel_time(i, j) >= 0, "travel_time", "entries must be >= 0");
  }

  check(price_cents.rows() == n && price_cents.cols() == n, "price",
        "must be n_stations x n_stations");
  for (Money p : price_cents.flat()) check(p >= 0, "price", "entries must be >= 0");

  check(demand_rate.dim0() == episode_len + plan_horizon, "demand_rate",
        "must have episode_len + plan_horizon time slices");
  check(demand_rate.dim1() == n && demand_rate.dim2() == n, "demand_rate",
        "slices must be n_stations x n_stations");
  for (double r : demand_rate.flat())
    check(std::isfinite(r) && r >= 0.0, "demand_rate", "rates must be finite and >= 0");

  if (price_override_cents) {
    check(price_override_cents->dim0() == episode_len &&
              price_override_cents->dim1() == n && price_override_cents->dim2() == n,
          "price_override", "must be episode_len x n_stations x n_stations");
    for (Money p : price_override_cents->flat())
      check(p >= 0, "price_override", "entries must be >= 0");
  }
}

namespace {

Grid2<double> parse_matrix(const json& j, const std::string& field, int n) {
  if (!j.is_array() || static_cast<int>(j.size()) != n)
    throw ValidationError(field + ": expected " + std::to_string(n) + " rows");
  Grid2<double> out(n, n);
  for (int i = 0; i < n; ++i) {
    const auto& row = j.at(i);
    if (!row.is_array() || static_cast<int>(row.size()) != n)
      throw ValidationError(field + ": row " + std::to_string(i) + " has wrong length");
    for (int k = 0; k < n; ++k) out(i, k) = row.at(k).get<double>();
  }
  return out;
}

Grid3<double> parse_tensor(const json& j, const std::string& field, int d0, int n) {
  if (!j.is_array() || static_cast<int>(j.size()) != d0)
    throw ValidationError(field + ": expected " + std::to_string(d0) + " time slices, got " +
                          std::to_string(j.size()));
  Grid3<double> out(d0, n, n);
  for (int t = 0; t < d0; ++t) {
    const auto& slice = j.at(t);
    if (!slice.is_array() || static_cast<int>(slice.size()) != n)
      throw ValidationError(field + ": slice " + std::to_string(t) + " has wrong shape");
    for (int i = 0; i < n; ++i) {
      const auto& row = slice.at(i);
      if (!row.is_array() || static_cast<int>(row.size()) != n)
        throw ValidationError(field + ": slice " + std::to_string(t) + " has wrong shape");
      for (int k = 0; k < n; ++k) out(t, i, k) = row.at(k).get<double>();
    }
  }
  return out;
}

json matrix_to_json(const Grid2<Money>& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(to_currency(m(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

Scenario scenario_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("scenario JSON: ") + e.what());
  }

  Scenario s;
  try {
    for (const char* key : {"name", "n_stations", "episode_len", "plan_horizon",
                            "fleet_size", "cost_per_step", "travel_time", "price",
                            "demand_rate"})
      if (!j.contains(key)) throw ValidationError(std::string(key) + ": missing field");

    s.name = j.at("name").get<std::string>();
    s.n_stations = j.at("n_stations").get<int>();
    s.step_minutes = j.value("step_minutes", 3.0);
    s.episode_len = j.at("episode_len").get<int>();
    s.plan_horizon = j.at("plan_horizon").get<int>();
    s.fleet_size = j.at("fleet_size").get<int>();
    s.cost_per_step_cents = to_cents(j.at("cost_per_step").get<double>());

    const int n = s.n_stations;
    if (n < 1) throw ValidationError("n_stations: must be >= 1");

    const Grid2<double> tt = parse_matrix(j.at("travel_time"), "travel_time", n);
    s.travel_time = Grid2<int>(n, n);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) {
        const double v = tt(i, k);
        if (v != std::floor(v))
          throw ValidationError("travel_time: entries must be integers");
        s.travel_time(i, k) = static_cast<int>(v);
      }

    const Grid2<double> pr = parse_matrix(j.at("price"), "price", n);
    s.price_cents = Grid2<Money>(n, n);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) s.price_cents(i, k) = to_cents(pr(i, k));

    s.demand_rate =
        parse_tensor(j.at("demand_rate"), "demand_rate", s.episode_len + s.plan_horizon, n);

    if (j.contains("price_override") && !j.at("price_override").is_null()) {
      const Grid3<double> ov =
          parse_tensor(j.at("price_override"), "price_override", s.episode_len, n);
      Grid3<Money> ovc(s.episode_len, n, n);
      for (std::size_t k = 0; k < ov.flat().size(); ++k)
        ovc.flat()[k] = to_cents(ov.flat()[k]);
      s.price_override_cents = std::move(ovc);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("scenario JSON: ") + e.what());
  }

  s.validate();
  return s;
}

std::string scenario_to_json_text(const Scenario& s) {
  json j;
  j["name"] = s.name;
  j["n_stations"] = s.n_stations;
  j["step_minutes"] = s.step_minutes;
  j["episode_len"] = s.episode_len;
  j["plan_horizon"] = s.plan_horizon;
  j["fleet_size"] = s.fleet_size;
  j["cost_per_step"] = to_currency(s.cost_per_step_cents);

  json tt = json::array();
  for (int i = 0; i < s.n_stations; ++i) {
    json row = json::array();
    for (int k = 0; k < s.n_stations; ++k) row.push_back(s.travel_time(i, k));
    tt.push_back(std::move(row));
  }
  j["travel_time"] = std::move(tt);
  j["price"] = matrix_to_json(s.price_cents);

  json rates = json::array();
  for (int t = 0; t < s.demand_rate.dim0(); ++t) {
    json slice = json::array();
    for (int i = 0; i < s.n_stations; ++i) {
      json row = json::array();
      for (int k = 0; k < s.n_stations; ++k) row.push_back(s.demand_rate(t, i, k));
      slice.push_back(std::move(row));
    }
    rates.push_back(std::move(slice));
  }
  j["demand_rate"] = std::move(rates);

  if (s.price_override_cents) {
    json ov = json::array();
    for (int t = 0; t < s.episode_len; ++t) {
      json slice = json::array();
      for (int i = 0; i < s.n_stations; ++i) {
        json row = json::array();
        for (int k = 0; k < s.n_stations; ++k)
          row.push_back(to_currency((*s.price_override_cents)(t, i, k)));
        slice.push_back(std::move(row));
      }
      ov.push_back(std::move(slice));
    }
    j["price_override"] = std::move(ov);
  }

  return j.dump(2);
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return scenario_from_json_text(buf.str());
}

void save_scenario(const Scenario& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write scenario file: " + path);
  out << scenario_to_json_text(s) << "\n";
}

std::uint64_t scenario_hash(const Scenario& s) {
  const std::string text = scenario_to_json_text(s);
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Scenario make_synthetic_scenario(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.n_stations < 2 || spec.n_stations > 32)
    throw InvalidSpec("n_stations must be in [2, 32]");
  if (spec.mean_rate <= 0.0) throw InvalidSpec("mean_rate must be > 0");
  if (spec.imbalance < 0.0) throw InvalidSpec("imbalance must be >= 0");
  if (spec.fleet_size < 1) throw InvalidSpec("fleet_size must be >= 1");
  if (spec.max_travel_steps < 1) throw InvalidSpec("max_travel_steps must be >= 1");

  const int n = spec.n_stations;
  const int total_steps = spec.episode_len + spec.plan_horizon;
  Rng rng(mix_seed(seed, /*stream=*/0x5C37));

  // Station layout on the unit square; travel time grows with distance.
  std::vector<double> px(n), py(n);
  for (int i = 0; i < n; ++i) {
    px[i] = rng.uniform();
    py[i] = rng.uniform();
  }
  double max_dist = 0.0;
  Grid2<double> dist(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double dx = px[i] - px[j];
      const double dy = py[i] - py[j];
      dist(i, j) = std::sqrt(dx * dx + dy * dy);
      if (dist(i, j) > max_dist) max_dist = dist(i, j);
    }
  if (max_dist <= 0.0) max_dist = 1.0;

  Scenario s;
  s.name = spec.name;
  s.n_stations = n;
  s.step_minutes = spec.step_minutes;
  s.episode_len = spec.episode_len;
  s.plan_horizon = spec.plan_horizon;
  s.fleet_size = spec.fleet_size;
  s.cost_per_step_cents = to_cents(spec.cost_per_step);

  s.travel_time = Grid2<int>(n, n);
  s.price_cents = Grid2<Money>(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const int steps = std::max(
          1, static_cast<int>(std::ceil(dist(i, j) / max_dist * spec.max_travel_steps)));
      s.travel_time(i, j) = steps;
      s.price_cents(i, j) = to_cents(spec.base_fare + spec.fare_per_step * steps);
    }

  // Demand: size weights s_i give each station a scale, a tidal potential u_i
  // combined with a within-episode tide h(t) skews origins against
  // destinations. imbalance = 0 leaves the rates exactly symmetric in (i, j).
  std::vector<double> size_w(n), tide_u(n);
  for (int i = 0; i < n; ++i) size_w[i] = 0.5 + rng.uniform();
  for (int i = 0; i < n; ++i) tide_u[i] = rng.uniform() - 0.5;
  const double phase = 2.0 * M_PI * rng.uniform();

  s.demand_rate = Grid3<double>(total_steps, n, n);
  double sum = 0.0;
  int count = 0;
  for (int t = 0; t < total_steps; ++t) {
    const double frac = static_cast<double>(t) / static_cast<double>(spec.episode_len);
    const double rho = 1.0 + 0.3 * std::sin(2.0 * M_PI * frac + phase);
    const double tide = std::sin(2.0 * M_PI * frac);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const double skew = std::exp(spec.imbalance * tide * (tide_u[i] - tide_u[j]));
        // Grouping keeps r bit-symmetric in (i, j) when skew is 1.
        const double r = rho * (size_w[i] * size_w[j]) * skew;
        s.demand_rate(t, i, j) = r;
        sum += r;
        ++count;
      }
  }
  const double scale = spec.mean_rate * static_cast<double>(count) / sum;
  for (double& r : s.demand_rate.flat()) r *= scale;

  s.validate();
  return s;
}

TripAggregate aggregate_trip_records(const std::vector<TripRecord>& records,
                                     int n_stations, int n_bins, double bin_minutes,
                                     double step_minutes) {
  if (n_stations < 1 || n_bins < 1 || bin_minutes <= 0.0 || step_minutes <= 0.0)
    throw InvalidSpec("aggregate_trip_records: all dimensions must be positive");
  const double ratio = bin_minutes / step_minutes;
  const int steps_per_bin = static_cast<int>(std::llround(ratio));
  if (steps_per_bin < 1 || std::fabs(ratio - steps_per_bin) > 1e-9)
    throw InvalidSpec("bin_minutes must be a multiple of step_minutes");

  const int n_steps = n_bins * steps_per_bin;
  TripAggregate out;
  out.demand_rate = Grid3<double>(n_steps, n_stations, n_stations);
  out.price = Grid2<double>(n_stations, n_stations);

  Grid3<double> bin_counts(n_bins, n_stations, n_stations);
  Grid2<double> price_sum(n_stations, n_stations);
  Grid2<double> trip_count(n_stations, n_stations);

  const double window = n_bins * bin_minutes;
  for (const TripRecord& r : records) {
    if (r.origin < 0 || r.origin >= n_stations || r.dest < 0 || r.dest >= n_stations)
      throw StationIndexError("trip record station out of range: " +
                              std::to_string(r.origin) + "->" + std::to_string(r.dest));
    if (r.depart_minute < 0.0 || r.depart_minute >= window) continue;  // outside window
    const int bin = static_cast<int>(r.depart_minute / bin_minutes);
    bin_counts(bin, r.origin, r.dest) += 1.0;
    price_sum(r.origin, r.dest) += r.price;
    trip_count(r.origin, r.dest) += 1.0;
  }

  for (int b = 0; b < n_bins; ++b)
    for (int i = 0; i < n_stations; ++i)
      for (int j = 0; j < n_stations; ++j) {
        const double rate = bin_counts(b, i, j) / steps_per_bin;
        for (int k = 0; k < steps_per_bin; ++k)
          out.demand_rate(b * steps_per_bin + k, i, j) = rate;
      }

  for (int i = 0; i < n_stations; ++i)
    for (int j = 0; j < n_stations; ++j)
      if (trip_count(i, j) > 0.0) out.price(i, j) = price_sum(i, j) / trip_count(i, j);

  return out;
}

std::vector<TripRecord> load_trip_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open trip record file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw ParseError("trip record file is empty: " + path);
  auto strip = [](std::string v) {
    v.erase(0, v.find_first_not_of(" \t\r"));
    v.erase(v.find_last_not_of(" \t\r") + 1);
    return v;
  };
  if (strip(line) != "origin,dest,depart_minute,price")
    throw ParseError("trip record header must be origin,dest,depart_minute,price");

  std::vector<TripRecord> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (strip(line).empty()) continue;
    std::stringstream ss(line);
    std::string field;
    TripRecord r;
    try {
      std::getline(ss, field, ',');
      r.origin = std::stoi(field);
      std::getline(ss, field, ',');
      r.dest = std::stoi(field);
      std::getline(ss, field, ',');
      r.depart_minute = std::stod(field);
      std::getline(ss, field, ',');
      r.price = std::stod(field);
    } catch (const std::exception&) {
      throw ParseError("bad trip record at line " + std::to_string(line_no));
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace amod
