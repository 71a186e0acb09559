#include "tge/mailbox.hpp"

#include <algorithm>
#include <bit>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace tge {

static_assert(std::endian::native == std::endian::little,
              "snapshot format assumes a little-endian host");

Mailbox::Mailbox(std::size_t slots, std::size_t dim) : dim_(dim) {
  if (slots == 0 || dim == 0)
    throw std::invalid_argument("Mailbox: slots and dim must be >= 1");
  slots_.resize(slots);
  for (std::size_t i = 0; i < slots; ++i) {
    slots_[i].mail.vec.assign(dim, 0.0);
    slots_[i].mail.timestamp = 0.0;
    slots_[i].seq = i;
  }
  next_seq_ = slots;
}

void Mailbox::push(Mail mail) {
  if (mail.vec.size() != dim_)
    throw std::invalid_argument("Mailbox::push: mail dimension " +
                                std::to_string(mail.vec.size()) + " != " +
                                std::to_string(dim_));
  slots_[head_].mail = std::move(mail);
  slots_[head_].seq = next_seq_++;
  head_ = (head_ + 1) % slots_.size();
}

Mailbox::Readout Mailbox::read() const {
  const std::size_t m = slots_.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [this](std::size_t a, std::size_t b) {
    if (slots_[a].mail.timestamp != slots_[b].mail.timestamp)
      return slots_[a].mail.timestamp < slots_[b].mail.timestamp;
    return slots_[a].seq < slots_[b].seq;
  });
  Readout out;
  out.slots = m;
  out.dim = dim_;
  out.matrix.resize(m * dim_);
  out.timestamps.resize(m);
  for (std::size_t r = 0; r < m; ++r) {
    const Slot& s = slots_[order[r]];
    std::copy(s.mail.vec.begin(), s.mail.vec.end(), out.matrix.begin() + r * dim_);
    out.timestamps[r] = s.mail.timestamp;
  }
  return out;
}

const Mail& Mailbox::newest() const {
  const Slot* best = &slots_[0];
  for (const Slot& s : slots_) {
    if (s.mail.timestamp > best->mail.timestamp ||
        (s.mail.timestamp == best->mail.timestamp && s.seq > best->seq))
      best = &s;
  }
  return best->mail;
}

bool Mailbox::operator==(const Mailbox& other) const {
  if (dim_ != other.dim_ || slots_.size() != other.slots_.size()) return false;
  // compare observable content: mails in push order
  const std::size_t m = slots_.size();
  for (std::size_t k = 0; k < m; ++k) {
    const Slot& a = slots_[(head_ + k) % m];
    const Slot& b = other.slots_[(other.head_ + k) % m];
    if (!(a.mail == b.mail)) return false;
  }
  return true;
}

MailboxStore::MailboxStore(std::size_t num_nodes, std::size_t slots, std::size_t dim)
    : slots_(slots), dim_(dim) {
  boxes_.reserve(num_nodes);
  for (std::size_t i = 0; i < num_nodes; ++i) boxes_.emplace_back(slots, dim);
}

Mailbox& MailboxStore::at(std::int64_t node) {
  return boxes_.at(static_cast<std::size_t>(node));
}

const Mailbox& MailboxStore::at(std::int64_t node) const {
  return boxes_.at(static_cast<std::size_t>(node));
}

namespace {

void put_i64(std::ostream& out, std::int64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void put_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::int64_t get_i64(std::istream& in) {
  std::int64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

double get_f64(std::istream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

}  // namespace

void MailboxStore::save(std::ostream& out) const {
  put_i64(out, static_cast<std::int64_t>(boxes_.size()));
  put_i64(out, static_cast<std::int64_t>(slots_));
  put_i64(out, static_cast<std::int64_t>(dim_));
  for (const Mailbox& box : boxes_) {
    put_i64(out, static_cast<std::int64_t>(box.slots_.size()));
    // push order, oldest first, so a reload replays the FIFO faithfully
    const std::size_t m = box.slots_.size();
    for (std::size_t k = 0; k < m; ++k) {
      const Mailbox::Slot& s = box.slots_[(box.head_ + k) % m];
      put_f64(out, s.mail.timestamp);
      for (double x : s.mail.vec) put_f64(out, x);
    }
  }
}

MailboxStore MailboxStore::load(std::istream& in) {
  const std::int64_t num_nodes = get_i64(in);
  const std::int64_t slots = get_i64(in);
  const std::int64_t dim = get_i64(in);
  if (!in || num_nodes < 0 || slots <= 0 || dim <= 0)
    throw std::runtime_error("MailboxStore::load: corrupt header");
  MailboxStore store(static_cast<std::size_t>(num_nodes), static_cast<std::size_t>(slots),
                     static_cast<std::size_t>(dim));
  for (Mailbox& box : store.boxes_) {
    const std::int64_t count = get_i64(in);
    if (count != slots) throw std::runtime_error("MailboxStore::load: bad slot count");
    for (std::int64_t k = 0; k < count; ++k) {
      Mail mail;
      mail.timestamp = get_f64(in);
      mail.vec.resize(static_cast<std::size_t>(dim));
      for (double& x : mail.vec) x = get_f64(in);
      box.push(std::move(mail));
    }
    if (!in) throw std::runtime_error("MailboxStore::load: truncated snapshot");
  }
  return store;
}

bool MailboxStore::operator==(const MailboxStore& other) const {
  return slots_ == other.slots_ && dim_ == other.dim_ && boxes_ == other.boxes_;
}

}  // namespace tge
