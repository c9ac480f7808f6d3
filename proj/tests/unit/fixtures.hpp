#pragma once

#include <memory>

#include "autorobust/data/dataset.hpp"
#include "autorobust/nets/networks.hpp"
#include "autorobust/nets/train.hpp"

namespace fixtures {

// A small CNN trained on 4-class shapes, built once per test binary.
struct TrainedShapes {
  autorobust::data::Dataset train_set = autorobust::data::make_shapes_dataset(20, 8, 4, 0.05, 11);
  autorobust::data::Dataset eval_set = autorobust::data::make_shapes_dataset(6, 8, 4, 0.05, 12);
  std::unique_ptr<autorobust::grad::Model> model = autorobust::nets::build_cnn({1, 8, 8}, {8, 16}, 4, 5);
  TrainedShapes() {
    autorobust::nets::TrainSchedule s;
    s.epochs = 40;
    s.batch_size = 16;
    autorobust::nets::train(*model, train_set, s, 1);
  }
};

inline TrainedShapes& trained() {
  static TrainedShapes t;
  return t;
}

}  // namespace fixtures
