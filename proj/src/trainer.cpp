#include "cbm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cbm::train {

namespace {

ad::Tensor frame_constant(ad::Tape& tape, const toys::Image& img) {
  return tape.constant({img.channels, img.h, img.w}, img.pix);
}

}  // namespace

ad::Tensor coherence_loss(ad::Tape& tape, const std::vector<OverlapPair>& pairs,
                          const std::vector<WaveClipOutputs>& clips) {
  if (pairs.empty()) return tape.constant({}, {0.0});
  auto find_clip = [&](int index) -> const WaveClipOutputs& {
    for (const auto& c : clips)
      if (c.clip_index == index) return c;
    throw std::invalid_argument("coherence_loss: pair references clip " + std::to_string(index) +
                                " which is not part of this wave");
  };
  ad::Tensor acc;
  for (const auto& p : pairs) {
    const WaveClipOutputs& a = find_clip(p.clip_a);
    const WaveClipOutputs& b = find_clip(p.clip_b);
    const int ia = p.timestamp - a.start;
    const int ib = p.timestamp - b.start;
    if (ia < 0 || ia >= static_cast<int>(a.outputs->size()) || ib < 0 || ib >= static_cast<int>(b.outputs->size()))
      throw std::invalid_argument("coherence_loss: timestamp " + std::to_string(p.timestamp) +
                                  " outside a registered clip");
    ad::Tensor term = ad::mse((*a.outputs)[static_cast<std::size_t>(ia)], (*b.outputs)[static_cast<std::size_t>(ib)]);
    acc = acc.defined() ? ad::add(acc, term) : term;
  }
  return ad::scale(acc, 1.0 / static_cast<double>(pairs.size()));
}

ad::Tensor total_objective(ad::Tape& tape, const std::vector<ad::Tensor>& task_losses, const ad::Tensor& coherence,
                           double lambda) {
  if (task_losses.empty()) throw std::invalid_argument("total_objective: no task losses");
  ad::Tensor acc;
  for (const auto& l : task_losses) {
    if (l.size() != 1) throw std::invalid_argument("total_objective: task losses must be scalars");
    acc = acc.defined() ? ad::add(acc, l) : l;
  }
  if (!coherence.defined()) return acc;
  if (coherence.size() != 1) throw std::invalid_argument("total_objective: coherence must be scalar");
  (void)tape;
  return ad::add(acc, ad::scale(coherence, lambda));
}

ad::Tensor clip_task_loss(ad::Tape& tape, const nn::UnrollResult& unrolled, const Clip& clip,
                          const toys::Sequence& seq, const TapeModel& model, toys::TaskKind task) {
  if (task == toys::TaskKind::MovingShapes) {
    if (seq.class_label < 0) throw std::invalid_argument("clip_task_loss: sequence has no class label");
    ad::Tensor logits = ad::affine(ad::flatten(unrolled.outputs.back()), model.head_w, model.head_b);
    return ad::softmax_xent(logits, seq.class_label);
  }
  // distance regression: per-step scalar prediction vs the frame label
  if (static_cast<int>(seq.step_labels.size()) != seq.length())
    throw std::invalid_argument("clip_task_loss: sequence lacks per-frame labels");
  ad::Tensor acc;
  for (std::size_t k = 0; k < unrolled.outputs.size(); ++k) {
    ad::Tensor pred = ad::affine(ad::flatten(unrolled.outputs[k]), model.head_w, model.head_b);
    const double target = static_cast<double>(seq.step_labels[static_cast<std::size_t>(clip.start) + k]);
    ad::Tensor term = ad::mse(pred, tape.constant({1}, {target}));
    acc = acc.defined() ? ad::add(acc, term) : term;
  }
  return ad::scale(acc, 1.0 / static_cast<double>(unrolled.outputs.size()));
}

EpochStats train_epoch(const toys::Dataset& data, ParamStore& params, const ModelSpec& spec,
                       const TrainOptions& opts, opt::AdamState& adam, const opt::AdamConfig& adam_cfg, double lr,
                       double td_rate, int epoch, std::uint64_t seed, StateStore& store) {
  spec.validate();
  opts.coherence.validate();
  EpochStats stats;
  double task_loss_sum = 0.0;
  double coherence_sum = 0.0;
  std::int64_t coherence_waves = 0;
  const int num_layers = spec.stack.num_layers();

  for (std::size_t si = 0; si < data.sequences.size(); ++si) {
    const toys::Sequence& seq = data.sequences[si];
    RngStream clip_rng =
        derive_stream(seed, "clips", {static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(si)});
    const std::vector<Clip> clips = sample_clips(seq.length(), opts.coherence, clip_rng, seq.id);
    const OverlapRegistry registry = build_overlap_registry(clips);
    for (const Clip& c : clips) stats.max_clip_len = std::max(stats.max_clip_len, c.length);
    stats.clips += static_cast<std::int64_t>(clips.size());

    std::vector<bool> done(clips.size(), false);
    std::size_t remaining = clips.size();
    while (remaining > 0) {
      // a wave is every pending clip whose init state is already available
      std::vector<int> wave;
      for (std::size_t ci = 0; ci < clips.size(); ++ci) {
        if (done[ci]) continue;
        if (clips[ci].start == 0 || store.has_all_layers(seq.id, num_layers, clips[ci].start - 1))
          wave.push_back(static_cast<int>(ci));
      }
      if (wave.empty()) {
        for (std::size_t ci = 0; ci < clips.size(); ++ci)
          if (!done[ci]) {
            wave.push_back(static_cast<int>(ci));  // fall back to zero init to guarantee progress
            break;
          }
      }

      ad::Tape tape;
      TapeModel model = mount_params(tape, params, spec, true);
      std::vector<nn::UnrollResult> unrolls(wave.size());
      std::vector<ad::Tensor> task_losses;
      std::vector<WaveClipOutputs> wave_outputs;
      for (std::size_t wi = 0; wi < wave.size(); ++wi) {
        const Clip& clip = clips[static_cast<std::size_t>(wave[wi])];
        std::vector<ad::Tensor> frames;
        for (int t = clip.start; t < clip.end(); ++t)
          frames.push_back(frame_constant(tape, seq.frames[static_cast<std::size_t>(t)]));
        nn::CbmState init = init_clip_state(tape, clip, store, spec.stack, spec.image_h, spec.image_w);
        RngStream gate_rng = derive_stream(seed, "gates",
                                           {static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(si),
                                            static_cast<std::uint64_t>(wave[wi])});
        unrolls[wi] = nn::unroll_clip(tape, frames, init, model.layers, spec.stack, td_rate, gate_rng);
        task_losses.push_back(clip_task_loss(tape, unrolls[wi], clip, seq, model, opts.task));
        wave_outputs.push_back({wave[wi], clip.start, &unrolls[wi].outputs});
      }

      std::vector<OverlapPair> wave_pairs;
      for (const OverlapPair& p : registry.pairs) {
        const bool a_in = std::find(wave.begin(), wave.end(), p.clip_a) != wave.end();
        const bool b_in = std::find(wave.begin(), wave.end(), p.clip_b) != wave.end();
        if (a_in && b_in) wave_pairs.push_back(p);
      }
      ad::Tensor coherence = coherence_loss(tape, wave_pairs, wave_outputs);
      ad::Tensor objective = total_objective(tape, task_losses, coherence, opts.coherence.lambda);
      if (!std::isfinite(objective.scalar()))
        throw std::runtime_error("train_epoch: non-finite loss at epoch " + std::to_string(epoch) + ", sequence " +
                                 std::to_string(seq.id) + ", clip starting at " +
                                 std::to_string(clips[static_cast<std::size_t>(wave.front())].start));

      tape.backward(objective);
      std::vector<std::vector<double>> grads = collect_grads(model);
      double sq = 0.0;
      for (const auto& g : grads)
        for (double v : g) sq += v * v;
      stats.grad_norm = std::max(stats.grad_norm, std::sqrt(sq));
      opt::adam_step(params, grads, adam, adam_cfg, lr);

      for (std::size_t wi = 0; wi < wave.size(); ++wi) {
        const Clip& clip = clips[static_cast<std::size_t>(wave[wi])];
        for (int k = 0; k < clip.length; ++k) {
          const nn::CbmState& st = unrolls[wi].states[static_cast<std::size_t>(k)];
          for (int layer = 0; layer < num_layers; ++layer)
            store.publish(seq.id, layer, clip.start + k, st.c[static_cast<std::size_t>(layer)].shape(),
                          st.c[static_cast<std::size_t>(layer)].value());
        }
        done[static_cast<std::size_t>(wave[wi])] = true;
        --remaining;
      }

      for (const auto& l : task_losses) task_loss_sum += l.scalar();
      if (!wave_pairs.empty()) {
        coherence_sum += coherence.scalar();
        coherence_waves += 1;
      }
      stats.pairs += static_cast<std::int64_t>(wave_pairs.size());
      stats.waves += 1;
      stats.peak_tape_depth = std::max(stats.peak_tape_depth, tape.max_chain_steps());
    }
  }

  stats.task_loss = stats.clips > 0 ? task_loss_sum / static_cast<double>(stats.clips) : 0.0;
  stats.coherence = coherence_waves > 0 ? coherence_sum / static_cast<double>(coherence_waves) : 0.0;
  return stats;
}

double measure_overlap_discrepancy(const toys::Dataset& data, const ParamStore& params, const ModelSpec& spec,
                                   const CoherenceConfig& cfg, std::uint64_t seed) {
  spec.validate();
  double sum = 0.0;
  std::int64_t count = 0;
  for (std::size_t si = 0; si < data.sequences.size(); ++si) {
    const toys::Sequence& seq = data.sequences[si];
    RngStream clip_rng = derive_stream(seed, "measure_clips", {static_cast<std::uint64_t>(si)});
    const std::vector<Clip> clips = sample_clips(seq.length(), cfg, clip_rng, seq.id);
    const OverlapRegistry registry = build_overlap_registry(clips);

    // run each clip cold: with hand-off, an overlapping clip would resume from
    // exactly the state its partner published and the recomputation would be
    // identical by construction, measuring nothing
    std::vector<std::vector<std::vector<double>>> outputs(clips.size());
    ad::Tape tape;
    tape.set_recording(false);
    TapeModel model = mount_params(tape, params, spec, false);
    RngStream gate_rng = derive_stream(seed, "measure_gates", {static_cast<std::uint64_t>(si)});
    for (std::size_t ci = 0; ci < clips.size(); ++ci) {
      const Clip& clip = clips[ci];
      std::vector<ad::Tensor> frames;
      for (int t = clip.start; t < clip.end(); ++t)
        frames.push_back(frame_constant(tape, seq.frames[static_cast<std::size_t>(t)]));
      nn::CbmState init = nn::zero_state(tape, spec.stack, spec.image_h, spec.image_w);
      nn::UnrollResult ur = nn::unroll_clip(tape, frames, init, model.layers, spec.stack, 0.0, gate_rng);
      for (const auto& o : ur.outputs) outputs[ci].push_back(o.value());
    }

    for (const OverlapPair& p : registry.pairs) {
      const auto& va = outputs[static_cast<std::size_t>(p.clip_a)]
                              [static_cast<std::size_t>(p.timestamp - clips[static_cast<std::size_t>(p.clip_a)].start)];
      const auto& vb = outputs[static_cast<std::size_t>(p.clip_b)]
                              [static_cast<std::size_t>(p.timestamp - clips[static_cast<std::size_t>(p.clip_b)].start)];
      double acc = 0.0;
      for (std::size_t j = 0; j < va.size(); ++j) acc += (va[j] - vb[j]) * (va[j] - vb[j]);
      sum += acc / static_cast<double>(va.size());
      count += 1;
    }
  }
  return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace cbm::train
