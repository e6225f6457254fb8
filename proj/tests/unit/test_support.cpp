#include <gtest/gtest.h>

#include <atomic>
#include <set>
#include <vector>

#include "ste/error.hpp"
#include "ste/parallel.hpp"
#include "ste/rng.hpp"

namespace {

TEST(Rng, PathsAreReproducibleAndDistinct) {
  auto a = ste::derive_engine(42, {1, 2, 3});
  auto b = ste::derive_engine(42, {1, 2, 3});
  EXPECT_EQ(a(), b());
  std::set<std::uint64_t> firsts;
  for (std::uint64_t i = 0; i < 100; ++i) firsts.insert(ste::derive_engine(42, {i, ste::stream::scenario})());
  EXPECT_EQ(firsts.size(), 100u);
  EXPECT_NE(ste::derive_engine(42, {1, 2})(), ste::derive_engine(42, {2, 1})());
  EXPECT_NE(ste::derive_engine(42, {})(), ste::derive_engine(43, {})());
}

TEST(Parallel, EveryIndexOnce) {
  for (unsigned threads : {1u, 3u}) {
    ste::set_thread_count(threads);
    std::vector<std::atomic<int>> hits(1000);
    ste::parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  }
  ste::set_thread_count(0);
}

TEST(Parallel, LowestFailingIndexWins) {
  ste::set_thread_count(4);
  try {
    ste::parallel_for(100, [](std::size_t i) {
      if (i == 17 || i == 80) throw ste::SimulationError("row " + std::to_string(i));
    });
    FAIL() << "expected an exception";
  } catch (const ste::SimulationError& e) {
    EXPECT_STREQ(e.what(), "row 17");
    EXPECT_EQ(e.kind(), ste::ErrorKind::simulation);
  }
  ste::set_thread_count(0);
}

TEST(Errors, KindsAreDistinct) {
  EXPECT_EQ(ste::ConfigError("x").kind(), ste::ErrorKind::config);
  EXPECT_EQ(ste::TrainingError("x", 3).epoch(), 3);
  EXPECT_EQ(ste::InferenceError("x").kind(), ste::ErrorKind::inference);
  EXPECT_EQ(ste::IoError("x").kind(), ste::ErrorKind::io);
}

}  // namespace
