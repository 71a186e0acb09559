#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace tge {

/// A d-dimensional interaction summary stamped with the event time.
struct Mail {
  std::vector<double> vec;
  double timestamp = 0.0;

  bool operator==(const Mail&) const = default;
};

/// Fixed-capacity per-node mail store. Eviction is by push order (true FIFO);
/// timestamp ordering is applied only at readout. Slots start pre-filled with
/// zero mails at t=0 so the readout is always a full m x d matrix.
class Mailbox {
 public:
  Mailbox(std::size_t slots, std::size_t dim);

  void push(Mail mail);

  struct Readout {
    std::size_t slots = 0;
    std::size_t dim = 0;
    std::vector<double> matrix;      // row-major, rows ascending by timestamp
    std::vector<double> timestamps;  // one per row; row 0 is the oldest
  };
  /// Rows sorted ascending by (timestamp, push order).
  Readout read() const;

  /// The slot that sorts last in the readout, i.e. the most recent mail.
  const Mail& newest() const;

  std::size_t capacity() const { return slots_.size(); }
  std::size_t dim() const { return dim_; }

  bool operator==(const Mailbox& other) const;

 private:
  friend class MailboxStore;
  struct Slot {
    Mail mail;
    std::uint64_t seq = 0;  // global push order, breaks timestamp ties
  };
  std::vector<Slot> slots_;
  std::size_t head_ = 0;  // next slot to overwrite (oldest push)
  std::uint64_t next_seq_ = 0;
  std::size_t dim_ = 0;
};

/// One mailbox per node, all sharing (m, d).
class MailboxStore {
 public:
  MailboxStore(std::size_t num_nodes, std::size_t slots, std::size_t dim);

  Mailbox& at(std::int64_t node);
  const Mailbox& at(std::int64_t node) const;

  std::size_t num_nodes() const { return boxes_.size(); }
  std::size_t slots() const { return slots_; }
  std::size_t dim() const { return dim_; }

  /// Flat binary snapshot: header (num_nodes, m, d as int64 LE), then per node
  /// the slot count followed by mails as (timestamp f64, d x f64) in push order.
  void save(std::ostream& out) const;
  static MailboxStore load(std::istream& in);

  bool operator==(const MailboxStore& other) const;

 private:
  std::vector<Mailbox> boxes_;
  std::size_t slots_ = 0;
  std::size_t dim_ = 0;
};

}  // namespace tge
