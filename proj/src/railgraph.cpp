#include "surconfort/railgraph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "surconfort/errors.hpp"
#include "surconfort/io.hpp"

namespace surconfort::railgraph {

namespace {

void check_id(int id, int size) {
  if (id < 0 || id >= size) {
    throw ArgumentError("station id " + std::to_string(id) + " out of range [0, " + std::to_string(size) + ")");
  }
}

std::string format_weight(double w) {
  std::ostringstream os;
  os.precision(17);
  os << w;
  return os.str();
}

}  // namespace

RailNetwork::RailNetwork(std::vector<Station> stations, const std::vector<std::pair<int, int>>& connections,
                         CoordinateMode mode)
    : stations_(std::move(stations)), mode_(mode) {
  std::sort(stations_.begin(), stations_.end(), [](const Station& a, const Station& b) { return a.id < b.id; });
  for (std::size_t k = 0; k < stations_.size(); ++k) {
    if (stations_[k].id != static_cast<int>(k)) {
      throw ArgumentError("station ids must be dense and unique 0..S-1; missing or duplicate id near " +
                          std::to_string(k));
    }
    for (double c : stations_[k].position) {
      if (!std::isfinite(c)) throw ArgumentError("station " + std::to_string(k) + " has a non-finite coordinate");
    }
  }
  const int n = size();
  for (auto [a, b] : connections) {
    check_id(a, n);
    check_id(b, n);
    if (a == b) throw ArgumentError("self-connection at station " + std::to_string(a));
    connections_.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::sort(connections_.begin(), connections_.end());
  connections_.erase(std::unique(connections_.begin(), connections_.end()), connections_.end());
  neighbors_.assign(static_cast<std::size_t>(n), {});
  for (auto [a, b] : connections_) {
    neighbors_[a].push_back(b);
    neighbors_[b].push_back(a);
  }
  for (auto& nb : neighbors_) std::sort(nb.begin(), nb.end());
}

const Station& RailNetwork::station(int id) const {
  check_id(id, size());
  return stations_[static_cast<std::size_t>(id)];
}

bool RailNetwork::connected(int i, int j) const {
  check_id(i, size());
  check_id(j, size());
  return std::binary_search(connections_.begin(), connections_.end(), std::pair{std::min(i, j), std::max(i, j)});
}

const std::vector<int>& RailNetwork::neighbors(int id) const {
  check_id(id, size());
  return neighbors_[static_cast<std::size_t>(id)];
}

double distance(const RailNetwork& network, int i, int j) {
  const auto& a = network.station(i).position;
  const auto& b = network.station(j).position;
  if (i == j) return 0.0;
  if (network.mode() == CoordinateMode::kPlanar) {
    return std::hypot(a[0] - b[0], a[1] - b[1]);
  }
  constexpr double kRad = std::numbers::pi / 180.0;
  const double lat1 = a[0] * kRad;
  const double lat2 = b[0] * kRad;
  const double dlat = lat2 - lat1;
  const double dlon = (b[1] - a[1]) * kRad;
  const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1) * std::cos(lat2) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

RailAdjacency::RailAdjacency(int size, std::vector<AdjacencyEntry> entries) : size_(size), entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(),
            [](const AdjacencyEntry& a, const AdjacencyEntry& b) { return std::pair{a.i, a.j} < std::pair{b.i, b.j}; });
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    const auto& e = entries_[k];
    check_id(e.i, size_);
    check_id(e.j, size_);
    if (e.i == e.j) throw ArgumentError("adjacency may not hold diagonal entries");
    if (!(e.weight > 0.0 && e.weight <= 1.0)) throw ArgumentError("adjacency weight outside (0, 1]");
    if (k > 0 && entries_[k - 1].i == e.i && entries_[k - 1].j == e.j) {
      throw ArgumentError("duplicate adjacency entry");
    }
  }
  row_begin_.assign(static_cast<std::size_t>(size_) + 1, 0);
  for (const auto& e : entries_) ++row_begin_[static_cast<std::size_t>(e.i) + 1];
  for (std::size_t r = 0; r < static_cast<std::size_t>(size_); ++r) row_begin_[r + 1] += row_begin_[r];
  for (const auto& e : entries_) {
    if (weight(e.j, e.i) != e.weight) throw ArgumentError("adjacency is not symmetric");
  }
}

double RailAdjacency::weight(int i, int j) const {
  check_id(i, size_);
  check_id(j, size_);
  const auto first = entries_.begin() + static_cast<std::ptrdiff_t>(row_begin_[i]);
  const auto last = entries_.begin() + static_cast<std::ptrdiff_t>(row_begin_[i + 1]);
  auto it = std::lower_bound(first, last, j, [](const AdjacencyEntry& e, int col) { return e.j < col; });
  return (it != last && it->j == j) ? it->weight : 0.0;
}

std::vector<AdjacencyEntry> RailAdjacency::unordered_pairs() const {
  std::vector<AdjacencyEntry> out;
  for (const auto& e : entries_) {
    if (e.i < e.j) out.push_back(e);
  }
  return out;
}

RailAdjacency build_adjacency(const RailNetwork& network, double max_distance_km) {
  if (!(max_distance_km > 0.0)) throw ArgumentError("d_max must be positive");
  std::vector<AdjacencyEntry> entries;
  const int n = network.size();
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double w = 0.0;
      if (network.connected(i, j)) {
        w = 1.0;
      } else {
        const double d = distance(network, i, j);
        if (d < max_distance_km) w = 1.0 - d / max_distance_km;
      }
      if (w > 0.0) {
        entries.push_back({i, j, w});
        entries.push_back({j, i, w});
      }
    }
  }
  return RailAdjacency(n, std::move(entries));
}

double cosine_spatial_weight(const std::array<double, 2>& a, const std::array<double, 2>& b) {
  const double na = std::hypot(a[0], a[1]);
  const double nb = std::hypot(b[0], b[1]);
  if (na == 0.0 || nb == 0.0) throw ArgumentError("cosine similarity of a zero vector");
  return (a[0] * b[0] + a[1] * b[1]) / (na * nb);
}

RailAdjacency build_cosine_adjacency(const RailNetwork& network) {
  const int n = network.size();
  std::vector<std::array<double, 2>> pos;
  pos.reserve(static_cast<std::size_t>(n));
  std::array<double, 2> centroid{0.0, 0.0};
  if (network.mode() == CoordinateMode::kPlanar) {
    for (const auto& s : network.stations()) {
      centroid[0] += s.position[0] / n;
      centroid[1] += s.position[1] / n;
    }
  }
  for (const auto& s : network.stations()) {
    pos.push_back({s.position[0] - centroid[0], s.position[1] - centroid[1]});
  }
  std::vector<AdjacencyEntry> entries;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double w = cosine_spatial_weight(pos[i], pos[j]);
      w = std::min(w, 1.0);
      if (w > 0.0) {
        entries.push_back({i, j, w});
        entries.push_back({j, i, w});
      }
    }
  }
  return RailAdjacency(n, std::move(entries));
}

RailNetwork read_network(const std::filesystem::path& stations_csv, const std::filesystem::path& edges_csv) {
  const auto st = io::read_csv(stations_csv);
  CoordinateMode mode;
  std::size_t ca = 0;
  std::size_t cb = 0;
  if (st.has_column("lat") && st.has_column("lon")) {
    mode = CoordinateMode::kGeographic;
    ca = st.column("lat");
    cb = st.column("lon");
  } else if (st.has_column("x") && st.has_column("y")) {
    mode = CoordinateMode::kPlanar;
    ca = st.column("x");
    cb = st.column("y");
  } else {
    throw DataError(stations_csv.string() + ": expected header id,name,lat,lon or id,name,x,y");
  }
  const auto cid = st.column("id");
  const auto cname = st.column("name");
  std::vector<Station> stations;
  for (const auto& row : st.rows) {
    stations.push_back({io::parse_int(row[cid], "station id"), row[cname],
                        {io::parse_double(row[ca], "coordinate"), io::parse_double(row[cb], "coordinate")}});
  }
  const auto ed = io::read_csv(edges_csv);
  const auto cf = ed.column("from_id");
  const auto ct = ed.column("to_id");
  std::vector<std::pair<int, int>> connections;
  for (const auto& row : ed.rows) {
    connections.emplace_back(io::parse_int(row[cf], "from_id"), io::parse_int(row[ct], "to_id"));
  }
  try {
    return RailNetwork(std::move(stations), connections, mode);
  } catch (const ArgumentError& e) {
    throw DataError(std::string("invalid rail network: ") + e.what());
  }
}

void write_stations_csv(const RailNetwork& network, const std::filesystem::path& path) {
  std::ostringstream os;
  os.precision(17);
  os << (network.mode() == CoordinateMode::kGeographic ? "id,name,lat,lon\n" : "id,name,x,y\n");
  for (const auto& s : network.stations()) {
    os << s.id << ',' << s.name << ',' << s.position[0] << ',' << s.position[1] << '\n';
  }
  io::write_file_atomic(path, os.str());
}

void write_edges_csv(const RailNetwork& network, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "from_id,to_id\n";
  for (auto [a, b] : network.connections()) os << a << ',' << b << '\n';
  io::write_file_atomic(path, os.str());
}

void write_adjacency_csv(const RailAdjacency& adjacency, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "i,j,weight\n";
  for (const auto& e : adjacency.entries()) os << e.i << ',' << e.j << ',' << format_weight(e.weight) << '\n';
  io::write_file_atomic(path, os.str());
}

}  // namespace surconfort::railgraph
