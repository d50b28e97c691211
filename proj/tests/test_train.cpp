// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "camc/models.hpp"
#include "camc/numcore/adam.hpp"
#include "camc/numcore/checkpoint.hpp"
#include "camc/sigsyn.hpp"
#include "camc/train.hpp"

using namespace camc;
using namespace camc::train;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "camc_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

datasetio::Dataset small_dataset(const std::string& name, std::vector<sigsyn::ModulationClass> classes,
                                 std::vector<int> snrs, std::size_t per_cell, std::size_t length,
                                 std::uint64_t seed = 5, bool impairments = true) {
  sigsyn::DatasetConfig cfg;
  if (!impairments) {
    cfg.random_phase = false;
    cfg.max_freq_offset = 0.0;
  }
  cfg.classes = std::move(classes);
  cfg.snr_grid_db = std::move(snrs);
  cfg.frames_per_class_per_snr = per_cell;
  cfg.frame_length = length;
  cfg.seed = seed;
  const auto path = scratch(name);
  sigsyn::generate_dataset(cfg, path);
  return datasetio::read_dataset(path);
}

using MC = sigsyn::ModulationClass;

const datasetio::Dataset& split_set() {
  static const auto ds = small_dataset("train_split.camcds", {MC::BPSK, MC::QPSK}, {0, 10}, 100, 32);
  return ds;
}

const datasetio::Dataset& toy_set() {
  static const auto ds = small_dataset("train_toy.camcds", {MC::BPSK, MC::QPSK, MC::QAM16, MC::GFSK}, {30}, 8, 64, 5, false);
  return ds;
}

TrainConfig quick_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.batch_size = 32;
  cfg.max_epochs = 3;
  cfg.patience = 2;
  return cfg;
}

std::vector<std::uint8_t> param_bytes(const models::Model& a, const models::Model& b) {
  std::vector<const models::Param*> all;
  for (const auto* p : a.params()) all.push_back(p);
  for (const auto* p : b.params()) all.push_back(p);
  return nc::encode_checkpoint(all);
}

}  // namespace

TEST_SUITE("train") {
  TEST_CASE("split is a stratified 60/20/20 partition per cell") {
    const auto& ds = split_set();
    const auto s = split_dataset(ds, TrainConfig{});
    CHECK(s.train.size() == 240);
    CHECK(s.val.size() == 80);
    CHECK(s.test.size() == 80);

    std::set<std::size_t> all;
    for (const auto* part : {&s.train, &s.val, &s.test}) all.insert(part->begin(), part->end());
    CHECK(all.size() == ds.frames.size());

    auto count = [&](const std::vector<std::size_t>& idx, int label, int snr) {
      return std::count_if(idx.begin(), idx.end(), [&](std::size_t i) {
        return ds.frames[i].label_id == label && ds.frames[i].sensing_snr_db == snr;
      });
    };
    for (int label : {0, 1})
      for (int snr : {0, 10}) {
        CHECK(count(s.train, label, snr) == 60);
        CHECK(count(s.val, label, snr) == 20);
        CHECK(count(s.test, label, snr) == 20);
      }
  }

  TEST_CASE("split depends only on the seed") {
    const auto& ds = split_set();
    TrainConfig a;
    a.seed = 3;
    const auto s1 = split_dataset(ds, a);
    const auto s2 = split_dataset(ds, a);
    CHECK(s1.train == s2.train);
    CHECK(s1.val == s2.val);
    CHECK(s1.test == s2.test);
    a.seed = 4;
    CHECK(split_dataset(ds, a).train != s1.train);
  }

  TEST_CASE("a cell with fewer than three frames cannot be split") {
    const auto ds = small_dataset("train_tiny.camcds", {MC::BPSK, MC::QPSK}, {0}, 2, 16);
    CHECK_THROWS_AS(split_dataset(ds, TrainConfig{}), SplitError);
  }

  TEST_CASE("fractions must sum to one") {
    TrainConfig cfg;
    cfg.val_fraction = 0.3;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }

  TEST_CASE("noise schedule draws") {
    nc::Rng rng(1);
    CHECK(std::isinf(SnrSchedule::noiseless().draw(rng)));
    CHECK(SnrSchedule::fixed(7.0).draw(rng) == 7.0);
    const auto u = SnrSchedule::uniform(-10, 18);
    for (int i = 0; i < 1000; ++i) {
      const double v = u.draw(rng);
      CHECK(v >= -10.0);
      CHECK(v <= 18.0);
    }
    CHECK_THROWS_AS(SnrSchedule::uniform(5, -5).validate(), std::invalid_argument);
  }

  TEST_CASE("noiseless channel leaves embeddings untouched") {
    Tensor z({3, 4}, 0.5f);
    const Tensor before = z;
    nc::Rng rng(2);
    add_channel_noise(z, SnrSchedule::noiseless(), rng);
    CHECK(z.vec() == before.vec());
    add_channel_noise(z, SnrSchedule::fixed(0.0), rng);
    CHECK(z.vec() != before.vec());
  }

  TEST_CASE("joint pipeline overfits a toy set") {
    const auto& ds = toy_set();
    const auto f = extract_features(ds);
    REQUIRE(f.count() == 32);
    auto enc = models::build_sscnet(64, 16);
    auto cls = models::build_mcnet(16, 4);
    enc.init(11);
    cls.init(12);
    auto trainable = enc.trainable_params();
    for (auto* p : cls.trainable_params()) trainable.push_back(p);
    nc::Adam<float> adam(trainable, nc::AdamConfig{0.003});

    std::vector<std::size_t> all(f.count());
    std::iota(all.begin(), all.end(), 0);
    nc::Rng rng(13);
    double acc = 0.0;
    std::size_t epoch = 0;
    for (; epoch < 200 && acc < 1.0; ++epoch) {
      std::shuffle(all.begin(), all.end(), rng);
      for (std::size_t start = 0; start < all.size(); start += 8) {
        const std::span<const std::size_t> idx(all.data() + start, 8);
        std::vector<int> labels;
        for (auto i : idx) labels.push_back(f.labels[i]);
        adam.zero_grad();
        joint_backward(enc, cls, gather(f, idx), labels, SnrSchedule::noiseless(), rng);
        adam.step();
      }
      acc = evaluate_joint(enc, cls, f, all, SnrSchedule::noiseless(), 0).accuracy;
    }
    MESSAGE("epochs to 100%: " << epoch);
    CHECK(acc == 1.0);
  }

  TEST_CASE("frozen training stops after patience plus one epochs") {
    const auto& ds = split_set();
    auto enc = models::build_sscnet(32, 8);
    auto cls = models::build_mcnet(8, 2);
    auto cfg = quick_config(1);
    cfg.frozen = true;
    cfg.patience = 4;
    cfg.max_epochs = 50;
    const auto r = train::train(enc, cls, ds, cfg);
    CHECK(r.history.epochs.size() == 5);
    CHECK(r.history.best_epoch == 0);
    CHECK(r.history.reason == StopReason::Patience);
    for (const auto& e : r.history.epochs) CHECK(e.val_loss == r.history.epochs[0].val_loss);
  }

  TEST_CASE("zero learning rate leaves weights unchanged in value") {
    const auto& ds = split_set();
    auto enc = models::build_sscnet(32, 8);
    auto cls = models::build_mcnet(8, 2);
    auto cfg = quick_config(2);
    cfg.lr = 0.0;
    cfg.patience = 2;
    cfg.max_epochs = 20;
    enc.init(cfg.seed);
    cls.init(cfg.seed + 1);
    const auto before = param_bytes(enc, cls);
    cfg.frozen = true;
    train::train(enc, cls, ds, cfg);
    CHECK(param_bytes(enc, cls) == before);
  }

  TEST_CASE("same seed reproduces history and weights bit for bit") {
    const auto& ds = split_set();
    auto run = [&] {
      auto enc = models::build_sscnet(32, 8);
      auto cls = models::build_mcnet(8, 2);
      const auto r = train::train(enc, cls, ds, quick_config(9));
      return std::make_pair(history_csv(r.history), param_bytes(enc, cls));
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
  }

  TEST_CASE("best weights are restored at the end") {
    const auto& ds = split_set();
    auto enc = models::build_sscnet(32, 8);
    auto cls = models::build_mcnet(8, 2);
    auto cfg = quick_config(4);
    cfg.max_epochs = 4;
    const auto r = train::train(enc, cls, ds, cfg);
    const auto f = extract_features(ds);
    const auto v = evaluate_joint(enc, cls, f, r.split.val, cfg.schedule, validation_noise_seed(cfg.seed));
    CHECK(v.loss == doctest::Approx(r.history.best_val_loss).epsilon(1e-6));
    CHECK(r.history.epochs[r.history.best_epoch].val_loss == r.history.best_val_loss);
  }

  TEST_CASE("every trainable tensor receives gradient") {
    // mcnet sees a single-step sequence, so attention softmax is constant and
    // the query/key projections get exactly zero gradient.
    const auto& ds = split_set();
    const auto f = extract_features(ds);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto enc = models::build_sscnet(32, 8);
      auto cls = models::build_mcnet(8, 2);
      enc.init(seed);
      cls.init(seed + 100);
      std::vector<std::size_t> idx(16);
      std::iota(idx.begin(), idx.end(), seed * 16);
      std::vector<int> labels;
      for (auto i : idx) labels.push_back(f.labels[i]);
      nc::Rng rng(seed);
      joint_backward(enc, cls, gather(f, idx), labels, SnrSchedule::uniform(-10, 18), rng);
      for (auto* m : {&enc, &cls})
        for (auto* p : m->trainable_params()) {
          double norm = 0.0;
          for (float g : p->grad().vec()) norm += double(g) * g;
          const bool qk = p->name().ends_with("/query") || p->name().ends_with("/key");
          INFO(p->name() << " seed " << seed);
          if (qk)
            CHECK(norm == 0.0);
          else
            CHECK(norm > 0.0);
        }
    }
  }

  TEST_CASE("non-finite input raises divergence with history") {
    auto ds = split_set();
    for (auto& fr : ds.frames) std::fill(fr.iq.begin(), fr.iq.end(), std::nanf(""));
    auto enc = models::build_sscnet(32, 8);
    auto cls = models::build_mcnet(8, 2);
    try {
      const auto r = train::train(enc, cls, ds, quick_config(1));
      FAIL("expected divergence, got\n" << history_csv(r.history));
    } catch (const TrainDivergence& e) {
      CHECK(std::string(e.what()).find("epoch 0") != std::string::npos);
    }
  }

  TEST_CASE("mismatched shapes are rejected") {
    const auto& ds = split_set();
    auto enc = models::build_sscnet(32, 8);
    auto cls = models::build_mcnet(16, 2);
    CHECK_THROWS_AS(train::train(enc, cls, ds, quick_config(1)), nc::ShapeError);
    auto cls11 = models::build_mcnet(8, 11);
    CHECK_THROWS_AS(train::train(enc, cls11, ds, quick_config(1)), nc::ShapeError);
  }

  TEST_CASE("direct baseline trains") {
    const auto& ds = split_set();
    auto m = models::build_sscnet_dc(32, 2);
    auto cfg = quick_config(3);
    cfg.max_epochs = 2;
    cfg.patience = 1;
    const auto r = train_direct(m, ds, cfg);
    CHECK(r.history.epochs.size() == 2);
    CHECK(std::isfinite(r.history.best_val_loss));
  }

  TEST_CASE("history csv") {
    TrainHistory h;
    h.epochs.push_back({0, 1.5, 1.25, 0.5});
    CHECK(history_csv(h) == "epoch,train_loss,val_loss,val_acc\n0,1.5,1.25,0.5\n");
  }

  TEST_CASE("slow: training loss falls within five epochs") {
    const auto ds = small_dataset("train_desk.camcds", {MC::BPSK, MC::QPSK, MC::QAM16, MC::GFSK},
                                  sigsyn::DatasetConfig::default_snr_grid(), 250, 128);
    std::vector<double> drops;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto enc = models::build_sscnet(128, 16);
      auto cls = models::build_mcnet(16, 4);
      auto cfg = quick_config(seed);
      cfg.batch_size = 200;
      cfg.max_epochs = 6;
      cfg.patience = 5;
      const auto r = train::train(enc, cls, ds, cfg);
      REQUIRE(r.history.epochs.size() == 6);
      drops.push_back(r.history.epochs[0].train_loss - r.history.epochs[5].train_loss);
    }
    std::nth_element(drops.begin(), drops.begin() + 2, drops.end());
    CHECK(drops[2] > 0.0);
  }
}
