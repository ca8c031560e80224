#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cbm::toys {

struct Image {
  int channels = 0, h = 0, w = 0;
  std::vector<double> pix;  // row-major [c][y][x]

  double& at(int c, int y, int x) { return pix[(static_cast<std::size_t>(c) * h + y) * w + x]; }
  double at(int c, int y, int x) const { return pix[(static_cast<std::size_t>(c) * h + y) * w + x]; }
};

enum class TaskKind { MovingShapes, CatDog };

TaskKind parse_task(const std::string& s);
std::string task_name(TaskKind t);

// One training/eval sequence. Classification sequences carry a single
// class_label; distance sequences carry one integer label per frame and the
// index of the cue frame.
struct Sequence {
  int id = 0;
  std::vector<Image> frames;
  int class_label = -1;
  std::vector<std::int64_t> step_labels;
  int cat_position = -1;

  int length() const { return static_cast<int>(frames.size()); }
};

struct Dataset {
  TaskKind task = TaskKind::MovingShapes;
  std::vector<Sequence> sequences;
};

}  // namespace cbm::toys
