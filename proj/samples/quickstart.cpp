// In-memory walk through the library: synthetic corpus, citation importance,
// triplets, a trained projection head, a k-NN graph, communities and a map.
//
//   ./build/samples/quickstart [out_dir]

#include <filesystem>
#include <iostream>

#include "citemap/communities.hpp"
#include "citemap/embedder.hpp"
#include "citemap/evalmetrics.hpp"
#include "citemap/importance.hpp"
#include "citemap/netgraph.hpp"
#include "citemap/sampler.hpp"
#include "citemap/scimap.hpp"

int main(int argc, char** argv) {
  using namespace citemap;
  const std::filesystem::path out_dir = argc > 1 ? argv[1] : ".";

  SyntheticSpec spec;
  spec.docs_per_topic = 80;
  spec.subtopics_per_topic = 2;
  const Corpus corpus = generate_synthetic_corpus(spec, 1);

  const auto table = extract_citation_features(corpus, FeatureSet{});
  const auto weights = entropy_weights(table);
  for (const auto& [f, w] : weights.weights) std::cout << feature_name(f) << " weight " << w << '\n';
  const auto scores = score_citations(table, weights);

  const auto triplets = filter_contradictions(sample_triplets(corpus, scores, {1000, 5, 2, 1}));
  const auto split = split_train_validation(triplets, 0.8, 2);

  const auto init = init_model(BaseEncoderConfig{}, 32, 3);
  const auto result = train(init, split.train, corpus, TrainConfig{}, &split.validation);
  const auto before = embed_corpus(corpus, init);
  const auto after = embed_corpus(corpus, result.model);
  std::cout << "validation satisfaction " << triplet_satisfaction(before, split.validation) << " -> "
            << triplet_satisfaction(after, split.validation) << '\n';

  const auto graph = build_knn_graph(after, 15);
  const auto stats = graph_statistics(graph, 100, 4);
  std::cout << "k-NN graph: " << stats.edges << " edges, clustering " << stats.clustering_coefficient << '\n';

  const auto partition = leiden(graph, QualityFunction::cpm, 0.02, 5);
  std::cout << partition.community_count() << " communities, accuracy " << clustering_accuracy(partition, corpus)
            << '\n';

  auto topics = topic_vectors(partition, after);
  apply_layout(topics, layout_2d(topics, LayoutMethod::stress, 6));
  const auto sim = CategorySimilarity::identity(corpus_categories(corpus));
  assign_overlays(topics, overlay_field(partition, corpus),
                  overlay_interdisciplinarity(partition, corpus, sim, corpus_categories(corpus).size()),
                  overlay_mean_year(partition, corpus));
  const auto map_path = (out_dir / "quickstart_map.tsv").string();
  export_map(topics, map_path, true);
  std::cout << "wrote " << map_path << " and " << map_path << ".svg\n";
}
