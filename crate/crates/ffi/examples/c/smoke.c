#include <stdio.h>
#include <stdlib.h>

#include "mfgplan.h"

#define CHECK(call)                                                              \
    do {                                                                         \
        MfgStatus s_ = (call);                                                   \
        if (s_ != MFG_STATUS_OK) {                                               \
            fprintf(stderr, "%s: %s (%s)\n", #call, mfg_status_name(s_),         \
                    mfg_last_error() ? mfg_last_error() : "");                   \
            return 1;                                                            \
        }                                                                        \
    } while (0)

int main(void) {
    double bound = 0.0;
    CHECK(mfg_lemma_bound(1.0, 1.0, 1.0, 1.0, &bound));
    printf("bound %.6f\n", bound);

    if (mfg_lemma_bound(1.0, 1.0, 100.0, 1.0, &bound) != MFG_STATUS_DOMAIN) {
        return 1;
    }

    MfgProblem *problem = NULL;
    MfgSolution *solution = NULL;
    CHECK(mfg_problem_from_scenario("trivial", &problem));
    MfgGridInfo grid;
    CHECK(mfg_problem_grid(problem, &grid));
    CHECK(mfg_solve(problem, &solution));
    MfgSolveSummary summary;
    CHECK(mfg_solution_summary(solution, &summary));

    size_t n = (grid.nt + 1) * grid.cells;
    double *m = malloc(n * sizeof(double));
    CHECK(mfg_solution_density(solution, m, n));
    printf("grid %zux%zu converged %d m[0] %.6f\n", grid.nx, grid.nt, summary.converged, m[0]);

    free(m);
    mfg_solution_free(solution);
    mfg_problem_free(problem);
    return 0;
}
