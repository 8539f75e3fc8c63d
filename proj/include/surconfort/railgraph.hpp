#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace surconfort::railgraph {

enum class CoordinateMode { kGeographic, kPlanar };

/// A station. In geographic mode `position` is (latitude, longitude) in
/// degrees; in planar mode it is (x, y) in kilometres.
struct Station {
  int id = 0;
  std::string name;
  std::array<double, 2> position{0.0, 0.0};
};

/// Stations plus undirected track connections. Immutable once built.
class RailNetwork {
 public:
  RailNetwork() = default;

  /// Validates dense ids, finite coordinates and connection endpoints.
  /// Connections are normalised to (min, max) and deduplicated; a
  /// self-connection is an ArgumentError.
  RailNetwork(std::vector<Station> stations, const std::vector<std::pair<int, int>>& connections,
              CoordinateMode mode);

  int size() const { return static_cast<int>(stations_.size()); }
  const std::vector<Station>& stations() const { return stations_; }
  const Station& station(int id) const;
  CoordinateMode mode() const { return mode_; }

  /// Unordered pairs with first < second, sorted.
  const std::vector<std::pair<int, int>>& connections() const { return connections_; }
  bool connected(int i, int j) const;
  const std::vector<int>& neighbors(int id) const;

 private:
  std::vector<Station> stations_;
  std::vector<std::pair<int, int>> connections_;
  std::vector<std::vector<int>> neighbors_;
  CoordinateMode mode_ = CoordinateMode::kPlanar;
};

inline constexpr double kEarthRadiusKm = 6371.0;
inline constexpr double kDefaultMaxDistanceKm = 3.0;

/// Straight-line distance in km: haversine in geographic mode, Euclidean in
/// planar mode.
double distance(const RailNetwork& network, int i, int j);

struct AdjacencyEntry {
  int i = 0;
  int j = 0;
  double weight = 0.0;
};

/// Sparse symmetric station-by-station weight matrix with an empty diagonal.
/// Entries are stored in both orientations, sorted by (i, j).
class RailAdjacency {
 public:
  RailAdjacency() = default;
  RailAdjacency(int size, std::vector<AdjacencyEntry> entries);

  int size() const { return size_; }
  const std::vector<AdjacencyEntry>& entries() const { return entries_; }
  /// Zero when the pair carries no entry.
  double weight(int i, int j) const;
  /// Each unordered pair once, i < j.
  std::vector<AdjacencyEntry> unordered_pairs() const;

 private:
  int size_ = 0;
  std::vector<AdjacencyEntry> entries_;
  std::vector<std::size_t> row_begin_;
};

/// Connected pairs weigh 1; otherwise 1 - d/d_max while d < d_max; otherwise
/// no entry.
RailAdjacency build_adjacency(const RailNetwork& network, double max_distance_km = kDefaultMaxDistanceKm);

/// a.b / (|a||b|). Throws ArgumentError for a zero vector.
double cosine_spatial_weight(const std::array<double, 2>& a, const std::array<double, 2>& b);

/// Alternative graph: every pair with positive cosine similarity of station
/// positions. Planar positions are taken relative to the network centroid,
/// geographic ones as raw (lat, lon).
RailAdjacency build_cosine_adjacency(const RailNetwork& network);

// CSV I/O. stations.csv: `id,name,lat,lon` or `id,name,x,y`; edges.csv:
// `from_id,to_id`.
RailNetwork read_network(const std::filesystem::path& stations_csv, const std::filesystem::path& edges_csv);
void write_stations_csv(const RailNetwork& network, const std::filesystem::path& path);
void write_edges_csv(const RailNetwork& network, const std::filesystem::path& path);
/// `i,j,weight`, one row per stored (directed) entry.
void write_adjacency_csv(const RailAdjacency& adjacency, const std::filesystem::path& path);

}  // namespace surconfort::railgraph
