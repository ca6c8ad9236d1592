// Library walk-through on a small planted dataset: generate activations,
// search for the intervention layer, erase the concept there and print what
// changed. The CLI does the same with files in between.

#include <cstdio>

#include <clear_align/intervene.hpp>
#include <clear_align/runconfig.hpp>

using namespace clear_align;

int main() {
    RunConfig cfg;   // desk defaults: 12 layers, concept planted at layer 5
    const PlantSpec plant = cfg.plant_spec();
    RngStream rng(cfg.get<std::uint64_t>("seed"), 0x6E6E);
    const LayeredActivations acts = generate_planted(plant, rng);

    const SearchResult run = run_search(cfg.train_config(), acts);
    std::printf("selected layer %zu (planted %zu), final preference %.3f, %.2fs\n", run.l_star, plant.planted_layer(),
                run.max_prob, run.wall_clock_s);

    const auto pos = acts.rows_of(acts.instances_with(Label::positive));
    const Matrix& h = acts.slabs[run.l_star];
    const double gamma = calibrated_gamma(h, concept_vectors(h, run.sae, run.masks), plant.concept_dir, pos);
    const auto after = erase_multi_layer(acts, {{run.l_star, gamma, &run.sae, &run.masks}});
    const ErasureReport rep = erasure_report(acts, after, run.l_star);

    std::printf("gamma %.3f: concept energy -%.1f%%, control energy %+.1f%%\n", gamma, 100 * rep.concept_reduction(),
                100 * rep.control_change());
    std::printf("target probe error %.3f -> %.3f, control probe error %.3f -> %.3f\n", rep.probe_error_target_before,
                rep.probe_error_target_after, *rep.probe_error_control_before, *rep.probe_error_control_after);
    return 0;
}
