#include "metrovuln/network.hpp"

#include <queue>
#include <stdexcept>

namespace metrovuln {

NetworkGraph::NetworkGraph(StationIdx n_stations, const std::vector<Edge>& edges) : n_(n_stations) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  dist_.assign(static_cast<std::size_t>(n_) * n_, inf);
  avg_adjacent_.assign(n_, 0.0);

  std::vector<std::vector<std::pair<StationIdx, double>>> adj(n_);
  std::vector<int> degree(n_, 0);
  for (const auto& e : edges) {
    if (e.from >= n_ || e.to >= n_) throw std::invalid_argument("edge endpoint out of range");
    if (e.track_km <= 0) throw std::invalid_argument("edge weight must be positive");
    adj[e.from].emplace_back(e.to, e.track_km);
    adj[e.to].emplace_back(e.from, e.track_km);
    avg_adjacent_[e.from] += e.track_km;
    avg_adjacent_[e.to] += e.track_km;
    ++degree[e.from];
    ++degree[e.to];
  }
  for (StationIdx s = 0; s < n_; ++s)
    if (degree[s] > 0) avg_adjacent_[s] /= degree[s];

  // Dijkstra from every node.
  using Item = std::pair<double, StationIdx>;
  for (StationIdx src = 0; src < n_; ++src) {
    at(src, src) = 0.0;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    pq.emplace(0.0, src);
    while (!pq.empty()) {
      auto [d, u] = pq.top();
      pq.pop();
      if (d > at(src, u)) continue;
      for (auto [v, w] : adj[u]) {
        double nd = d + w;
        if (nd < at(src, v)) {
          at(src, v) = nd;
          pq.emplace(nd, v);
        }
      }
    }
  }
}

std::optional<double> NetworkGraph::shortest_path_km(StationIdx origin, StationIdx dest) const {
  if (origin >= n_ || dest >= n_) throw std::out_of_range("station index out of range");
  double d = at(origin, dest);
  if (d == std::numeric_limits<double>::infinity()) return std::nullopt;
  return d;
}

std::size_t NetworkGraph::count_unreachable_pairs(const std::vector<StationIdx>& used) const {
  std::size_t count = 0;
  for (std::size_t i = 0; i < used.size(); ++i)
    for (std::size_t j = i + 1; j < used.size(); ++j)
      if (at(used[i], used[j]) == std::numeric_limits<double>::infinity()) ++count;
  return count;
}

TripSpeedResult trip_speed(const TripRecord& trip, const NetworkGraph& graph) {
  TripSpeedResult r;
  if (trip.entry_station == trip.exit_station) {
    r.status = TripSpeedStatus::DegenerateSameStation;
    return r;
  }
  auto km = graph.shortest_path_km(trip.entry_station, trip.exit_station);
  if (!km) {
    r.status = TripSpeedStatus::NoPath;
    return r;
  }
  auto minutes = trip.exit_ts - trip.entry_ts;
  if (minutes <= 0) throw std::invalid_argument("trip journey time must be positive");
  r.km = *km;
  r.kmh = *km / (static_cast<double>(minutes) / 60.0);
  return r;
}

}  // namespace metrovuln
