// Prints the trade-off curve f(lambda) for a few methods on one dataset.
//
//   tradeoff_demo results.csv [dataset]

#include <cstdio>
#include <string>

#include "veilkit/metrics.hpp"

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: tradeoff_demo results.csv [dataset]\n");
    return 1;
  }
  const std::string dataset = argc > 2 ? argv[2] : "KTH";
  try {
    const auto in = veilkit::ingest_results(argv[1]);
    std::vector<veilkit::MetricRecord> rows;
    for (const auto& r : in.records)
      if (r.dataset == dataset) rows.push_back(r);

    const auto lambdas = veilkit::parse_lambda_range("0:1:0.25");
    const auto table = veilkit::sweep(rows, lambdas);
    std::printf("%-18s", "method");
    for (double l : lambdas) std::printf("  l=%.2f", l);
    std::printf("\n");
    for (const auto& row : table.rows) {
      std::printf("%-18s", row.method.c_str());
      for (double f : row.values) std::printf("  %6.3f", f);
      std::printf("\n");
    }
  } catch (const veilkit::Error& e) {
    std::fprintf(stderr, "tradeoff_demo: %s\n", e.what());
    return 1;
  }
  return 0;
}
