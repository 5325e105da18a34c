// Generates a small planted dataset, trains AMNL for a few epochs and
// prints held-out Precision@1/3 and AUC.
//
//   quickstart [output-dir]

#include <filesystem>
#include <iostream>

#include "irmrank/report.hpp"
#include "irmrank/synth.hpp"
#include "irmrank/train.hpp"

int main(int argc, char** argv) {
  const std::filesystem::path dir = argc > 1 ? argv[1] : "quickstart-data";

  irm::SynthConfig synth;
  synth.users = 60;
  synth.tweets = 300;
  const auto manifest = irm::write_synth(irm::synth_generate(synth), dir);
  const irm::Dataset ds = irm::load_dataset(manifest);

  irm::TrainConfig cfg;
  cfg.variant = irm::Variant::Amnl;
  cfg.epochs = 10;
  const auto untrained = irm::evaluate(irm::initial_checkpoint(cfg, ds), ds);
  const auto result = irm::train(cfg, ds, std::nullopt, [](const irm::EpochLog& l, const irm::Checkpoint&) {
    std::cout << "epoch " << l.epoch << " objective " << l.objective << '\n';
  });
  const auto report = irm::evaluate(result.checkpoint, ds);

  std::cout << "untrained AUC " << untrained.auc << "\n\n" << irm::eval_table(report);
}
