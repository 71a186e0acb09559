#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <sstream>

#include "tge/mailbox.hpp"

using namespace tge;

namespace {

Mail mail_of(std::vector<double> v, double t) { return Mail{std::move(v), t}; }

bool all_zero(const std::vector<double>& v) {
  for (double x : v)
    if (x != 0.0) return false;
  return true;
}

// list-suffix oracle: keep every push, then take the last m sorted by
// (timestamp, push order)
Mailbox::Readout oracle_readout(const std::vector<Mail>& pushed, std::size_t m,
                                std::size_t d) {
  std::vector<std::pair<Mail, std::size_t>> window;
  for (std::size_t i = 0; i < m; ++i) window.push_back({Mail{std::vector<double>(d, 0.0), 0.0}, i});
  for (std::size_t i = 0; i < pushed.size(); ++i) window.push_back({pushed[i], m + i});
  if (window.size() > m) window.erase(window.begin(), window.end() - static_cast<long>(m));
  std::stable_sort(window.begin(), window.end(), [](const auto& a, const auto& b) {
    if (a.first.timestamp != b.first.timestamp) return a.first.timestamp < b.first.timestamp;
    return a.second < b.second;
  });
  Mailbox::Readout out;
  out.slots = m;
  out.dim = d;
  out.matrix.resize(m * d);
  out.timestamps.resize(m);
  for (std::size_t r = 0; r < m; ++r) {
    std::copy(window[r].first.vec.begin(), window[r].first.vec.end(),
              out.matrix.begin() + static_cast<long>(r * d));
    out.timestamps[r] = window[r].first.timestamp;
  }
  return out;
}

}  // namespace

TEST_CASE("a fresh store reads as zero matrices") {
  MailboxStore store(3, 2, 4);
  for (std::int64_t node = 0; node < 3; ++node) {
    auto r = store.at(node).read();
    CHECK(r.slots == 2);
    CHECK(r.dim == 4);
    CHECK(all_zero(r.matrix));
    CHECK(all_zero(r.timestamps));
  }
}

TEST_CASE("one push leaves one zero row and one mail row") {
  Mailbox box(2, 3);
  box.push(mail_of({1, 2, 3}, 5.0));
  auto r = box.read();
  CHECK(std::vector<double>(r.matrix.begin(), r.matrix.begin() + 3) ==
        std::vector<double>{0, 0, 0});
  CHECK(std::vector<double>(r.matrix.begin() + 3, r.matrix.end()) ==
        std::vector<double>{1, 2, 3});
  CHECK(r.timestamps == std::vector<double>{0.0, 5.0});
}

TEST_CASE("eviction follows push order") {
  Mailbox box(3, 1);
  box.push(mail_of({1}, 1));
  box.push(mail_of({2}, 2));
  box.push(mail_of({3}, 3));
  box.push(mail_of({4}, 4));
  auto r = box.read();
  CHECK(r.matrix == std::vector<double>{2, 3, 4});
}

TEST_CASE("identical mails are kept as distinct slots") {
  Mailbox box(3, 1);
  box.push(mail_of({7}, 1));
  box.push(mail_of({7}, 1));
  auto r = box.read();
  CHECK(r.matrix == std::vector<double>{0, 7, 7});
}

TEST_CASE("pushes of the wrong dimension are rejected") {
  Mailbox box(2, 3);
  CHECK_THROWS_AS(box.push(mail_of({1, 2}, 0.0)), std::invalid_argument);
}

TEST_CASE("readout sorts rows by timestamp") {
  Mailbox box(3, 1);
  box.push(mail_of({1}, 5));
  box.push(mail_of({2}, 2));
  box.push(mail_of({3}, 9));
  auto r = box.read();
  CHECK(r.timestamps == std::vector<double>{2, 5, 9});
  CHECK(r.matrix == std::vector<double>{2, 1, 3});
}

TEST_CASE("out-of-order arrival reads the same as in-order arrival") {
  Mailbox early(2, 2), late(2, 2);
  early.push(mail_of({1, 1}, 5));
  early.push(mail_of({2, 2}, 9));
  late.push(mail_of({2, 2}, 9));
  late.push(mail_of({1, 1}, 5));
  auto a = early.read(), b = late.read();
  CHECK(a.matrix == b.matrix);
  CHECK(a.timestamps == b.timestamps);
}

TEST_CASE("readout is invariant under arrival permutations of distinct timestamps") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> val(-1, 1);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t m = 5, d = 3;
    std::vector<Mail> mails;
    for (std::size_t i = 0; i < m; ++i)
      mails.push_back(mail_of({val(rng), val(rng), val(rng)}, static_cast<double>(i + 1)));
    Mailbox in_order(m, d);
    for (const Mail& mm : mails) in_order.push(mm);
    std::shuffle(mails.begin(), mails.end(), rng);
    Mailbox shuffled(m, d);
    for (const Mail& mm : mails) shuffled.push(mm);
    CHECK(in_order.read().matrix == shuffled.read().matrix);
    CHECK(in_order.read().timestamps == shuffled.read().timestamps);
  }
}

TEST_CASE("a thousand random pushes match the list-suffix oracle") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> val(-2, 2);
  std::uniform_int_distribution<int> ts(0, 50);  // collisions on purpose
  const std::size_t m = 10, d = 4;
  Mailbox box(m, d);
  std::vector<Mail> pushed;
  for (int i = 0; i < 1000; ++i) {
    Mail mm = mail_of({val(rng), val(rng), val(rng), val(rng)}, static_cast<double>(ts(rng)));
    box.push(mm);
    pushed.push_back(mm);
    if (i % 97 == 0 || i == 999) {
      auto got = box.read();
      auto want = oracle_readout(pushed, m, d);
      CHECK(got.matrix == want.matrix);
      CHECK(got.timestamps == want.timestamps);
    }
  }
}

TEST_CASE("newest returns the row that sorts last") {
  Mailbox box(3, 1);
  box.push(mail_of({1}, 4));
  box.push(mail_of({2}, 9));
  box.push(mail_of({3}, 6));
  CHECK(box.newest().vec == std::vector<double>{2});
  box.push(mail_of({4}, 9));  // tie: later push wins
  CHECK(box.newest().vec == std::vector<double>{4});
}

TEST_CASE("snapshot save and load preserve every mailbox") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> val(-1, 1);
  MailboxStore store(4, 3, 2);
  for (int i = 0; i < 40; ++i) {
    const auto node = static_cast<std::int64_t>(rng() % 4);
    store.at(node).push(mail_of({val(rng), val(rng)}, static_cast<double>(i % 7)));
  }
  std::stringstream buffer(std::ios::in | std::ios::out | std::ios::binary);
  store.save(buffer);
  MailboxStore loaded = MailboxStore::load(buffer);
  CHECK(loaded == store);
  for (std::int64_t node = 0; node < 4; ++node) {
    CHECK(loaded.at(node).read().matrix == store.at(node).read().matrix);
    CHECK(loaded.at(node).read().timestamps == store.at(node).read().timestamps);
  }
}

TEST_CASE("corrupt snapshots are rejected") {
  std::stringstream buffer(std::ios::in | std::ios::out | std::ios::binary);
  buffer.write("garbage", 7);
  CHECK_THROWS_AS(MailboxStore::load(buffer), std::runtime_error);
}
