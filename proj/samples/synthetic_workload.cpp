// Writes a synthetic ID/OOD workload and a matching toy exit net.
//
//   synthetic_workload <out-dir> [id-count] [ood-count] [seed]
//
// Then, for example:
//   mood infer --weights out/net.moodnet --images out/id.moodimg --labels out/id_labels.txt --out out/id.jsonl
//   mood infer --weights out/net.moodnet --images out/ood.moodimg --out out/ood.jsonl
//   mood calibrate --id-logits out/id.jsonl --id-images out/id.moodimg --out out/profile.json
//   mood eval --profile out/profile.json --costs out/id.costs.json --id-logits out/id.jsonl \
//       --id-images out/id.moodimg --ood-logits out/ood.jsonl --ood-images out/ood.moodimg --out out/eval

#include <cstdlib>
#include <iostream>
#include <string>

#include "synthetic.hpp"

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: " << argv[0] << " <out-dir> [id-count] [ood-count] [seed]\n";
        return 1;
    }
    const std::size_t id_count = argc > 2 ? std::stoul(argv[2]) : 500;
    const std::size_t ood_count = argc > 3 ? std::stoul(argv[3]) : 500;
    const std::uint64_t seed = argc > 4 ? std::stoull(argv[4]) : 7;
    try {
        const auto paths = mood::synthetic::write_workload(argv[1], id_count, ood_count, seed);
        std::cout << "weights    " << paths.weights.string() << '\n'
                  << "id images  " << paths.id_images.string() << '\n'
                  << "id labels  " << paths.id_labels.string() << '\n'
                  << "ood images " << paths.ood_images.string() << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
