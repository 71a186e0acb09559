#include "tge/event_store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

namespace tge {

namespace {

// Shortest round-trip decimal form, so parse(write(log)) == log bit for bit.
void append_double(std::string& out, double x) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  out.append(buf, ptr);
}

double parse_double(std::string_view field, std::size_t line_no, const char* what) {
  double x = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), x);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" +
                     std::string(field) + "'");
  return x;
}

std::int64_t parse_int(std::string_view field, std::size_t line_no, const char* what) {
  std::int64_t x = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), x);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" +
                     std::string(field) + "'");
  return x;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

}  // namespace

EventLog parse_interaction_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty input: missing header line");

  struct RawRow {
    std::int64_t user, item;
    double timestamp;
    int label;
    std::vector<double> feat;
  };
  std::vector<RawRow> rows;
  std::int64_t max_user = -1, max_item = -1;
  std::int64_t d_e = -1;
  double prev_t = -std::numeric_limits<double>::infinity();
  std::size_t line_no = 1;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() < 4)
      throw ParseError("line " + std::to_string(line_no) + ": expected at least 4 fields, got " +
                       std::to_string(fields.size()));
    RawRow row;
    row.user = parse_int(fields[0], line_no, "user id");
    row.item = parse_int(fields[1], line_no, "item id");
    row.timestamp = parse_double(fields[2], line_no, "timestamp");
    row.label = static_cast<int>(parse_int(fields[3], line_no, "label"));
    if (row.user < 0 || row.item < 0)
      throw ParseError("line " + std::to_string(line_no) + ": negative node id");
    const std::int64_t nfeat = static_cast<std::int64_t>(fields.size()) - 4;
    if (d_e < 0) {
      d_e = nfeat;
    } else if (nfeat != d_e) {
      throw ParseError("line " + std::to_string(line_no) + ": row has " +
                       std::to_string(nfeat) + " features, expected " + std::to_string(d_e));
    }
    if (row.timestamp < prev_t)
      throw ParseError("line " + std::to_string(line_no) + ": timestamp " +
                       std::to_string(row.timestamp) + " decreases (previous " +
                       std::to_string(prev_t) + ")");
    prev_t = row.timestamp;
    row.feat.reserve(static_cast<std::size_t>(nfeat));
    for (std::size_t i = 4; i < fields.size(); ++i)
      row.feat.push_back(parse_double(fields[i], line_no, "feature"));
    max_user = std::max(max_user, row.user);
    max_item = std::max(max_item, row.item);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("no data rows");

  EventLog log;
  log.num_users = max_user + 1;
  log.num_nodes = log.num_users + max_item + 1;
  log.d_e = d_e;
  log.events.reserve(rows.size());
  for (RawRow& row : rows) {
    TemporalEvent ev;
    ev.src = row.user;
    ev.dst = log.num_users + row.item;
    ev.edge_feat = std::move(row.feat);
    ev.timestamp = row.timestamp;
    ev.label = row.label;
    log.events.push_back(std::move(ev));
  }
  return log;
}

void write_interaction_csv(const EventLog& log, std::ostream& out) {
  std::string buf = "user_id,item_id,timestamp,state_label";
  for (std::int64_t i = 1; i <= log.d_e; ++i) buf += ",f_" + std::to_string(i);
  buf += '\n';
  for (const TemporalEvent& ev : log.events) {
    buf += std::to_string(ev.src);
    buf += ',';
    buf += std::to_string(ev.dst - log.num_users);
    buf += ',';
    append_double(buf, ev.timestamp);
    buf += ',';
    buf += std::to_string(ev.label.value_or(0));
    for (double f : ev.edge_feat) {
      buf += ',';
      append_double(buf, f);
    }
    buf += '\n';
    out << buf;
    buf.clear();
  }
}

void write_metadata(const EventLog& log, std::ostream& out) {
  out << "num_users=" << log.num_users << '\n'
      << "num_items=" << (log.num_nodes - log.num_users) << '\n'
      << "d_e=" << log.d_e << '\n'
      << "num_events=" << log.events.size() << '\n';
}

DataSplit split_chronological(const EventLog& log, double train_frac, double val_frac) {
  if (!(train_frac > 0.0) || !(val_frac > 0.0) || !(train_frac + val_frac < 1.0))
    throw std::invalid_argument("split_chronological: fractions out of range");
  const auto m = static_cast<double>(log.events.size());
  DataSplit split;
  const auto train_end = static_cast<std::size_t>(std::floor(train_frac * m));
  const auto val_end = static_cast<std::size_t>(std::floor((train_frac + val_frac) * m));
  split.train = {0, train_end};
  split.val = {train_end, val_end};
  split.test = {val_end, log.events.size()};
  for (std::size_t i = 0; i < train_end; ++i) {
    split.seen_nodes.insert(log.events[i].src);
    split.seen_nodes.insert(log.events[i].dst);
  }
  return split;
}

std::vector<IndexRange> batches(IndexRange range, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batches: batch_size must be >= 1");
  std::vector<IndexRange> out;
  out.reserve((range.size() + batch_size - 1) / batch_size);
  for (std::size_t b = range.begin; b < range.end; b += batch_size)
    out.push_back({b, std::min(b + batch_size, range.end)});
  return out;
}

void TemporalAdjacency::record(std::int64_t u, std::int64_t v, double t) {
  auto& lu = lists_.at(static_cast<std::size_t>(u));
  auto& lv = lists_.at(static_cast<std::size_t>(v));
  if ((!lu.empty() && lu.back().second > t) || (!lv.empty() && lv.back().second > t))
    throw std::logic_error("TemporalAdjacency::record: out-of-order timestamp");
  lu.emplace_back(v, t);
  lv.emplace_back(u, t);
}

std::vector<std::pair<std::int64_t, double>> TemporalAdjacency::recent_neighbors(
    std::int64_t node, std::size_t n, double t) const {
  std::vector<std::pair<std::int64_t, double>> out;
  if (node < 0 || static_cast<std::size_t>(node) >= lists_.size()) return out;
  const auto& list = lists_[static_cast<std::size_t>(node)];
  // first entry with timestamp >= t; everything before it is admissible
  auto it = std::lower_bound(list.begin(), list.end(), t,
                             [](const auto& entry, double t) { return entry.second < t; });
  const std::size_t avail = static_cast<std::size_t>(it - list.begin());
  const std::size_t take = std::min(n, avail);
  out.reserve(take);
  for (std::size_t k = 0; k < take; ++k) out.push_back(list[avail - 1 - k]);
  return out;
}

}  // namespace tge
