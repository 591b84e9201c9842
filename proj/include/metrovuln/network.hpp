#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "metrovuln/ingest.hpp"

namespace metrovuln {

// Undirected station graph weighted by track length. All-pairs shortest
// distances are computed once at construction; queries are pure lookups,
// so concurrent reads are fine.
class NetworkGraph {
 public:
  NetworkGraph(StationIdx n_stations, const std::vector<Edge>& edges);

  StationIdx size() const { return n_; }

  // Track km of the shortest route, or nullopt when no path exists.
  std::optional<double> shortest_path_km(StationIdx origin, StationIdx dest) const;

  // Mean track length of edges incident to the station; 0 for isolated nodes.
  double avg_adjacent_km(StationIdx s) const { return avg_adjacent_[s]; }

  // Unordered station pairs among `used` that cannot reach each other.
  std::size_t count_unreachable_pairs(const std::vector<StationIdx>& used) const;

 private:
  StationIdx n_;
  std::vector<double> dist_;  // n x n, infinity() where unreachable
  std::vector<double> avg_adjacent_;

  double& at(StationIdx a, StationIdx b) { return dist_[static_cast<std::size_t>(a) * n_ + b]; }
  double at(StationIdx a, StationIdx b) const { return dist_[static_cast<std::size_t>(a) * n_ + b]; }
};

enum class TripSpeedStatus : std::uint8_t {
  Ok,
  DegenerateSameStation,  // entry == exit, zero distance
  NoPath,
};

struct TripSpeedResult {
  TripSpeedStatus status = TripSpeedStatus::Ok;
  double km = 0;
  double kmh = 0;
};

// Speed of one trip: shortest-path km divided by observed journey hours.
// Journey time must be positive (guaranteed for ingest-accepted trips).
TripSpeedResult trip_speed(const TripRecord& trip, const NetworkGraph& graph);

}  // namespace metrovuln
