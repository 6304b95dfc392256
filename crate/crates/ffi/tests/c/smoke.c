#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "leader_consensus.h"

static char *slurp(const char *path) {
    FILE *f = fopen(path, "rb");
    if (!f) return NULL;
    fseek(f, 0, SEEK_END);
    long len = ftell(f);
    fseek(f, 0, SEEK_SET);
    char *buf = malloc((size_t)len + 1);
    if (fread(buf, 1, (size_t)len, f) != (size_t)len) { fclose(f); free(buf); return NULL; }
    buf[len] = 0;
    fclose(f);
    return buf;
}

int main(int argc, char **argv) {
    if (argc != 2) return 2;
    char *json = slurp(argv[1]);
    if (!json) return 2;

    LcSystem *sys = NULL;
    if (lc_system_from_json(json, &sys) != LC_STATUS_OK) {
        fprintf(stderr, "create: %s\n", lc_last_error_message());
        return 1;
    }
    free(json);

    double lmax = 0, rho = 0;
    int hold = 0;
    lc_system_lambda_max_p(sys, &lmax);
    lc_system_check(sys, &hold, &rho);
    printf("lambda_max_P %.4f\n", lmax);
    printf("holds %d rho_positive %d\n", hold, rho > 0);

    LcTrajectory *traj = NULL;
    size_t len = 0;
    if (lc_simulate(sys, &traj) != LC_STATUS_OK) return 1;
    lc_trajectory_len(traj, &len);
    double t = 0, v = 0, eps[6];
    lc_trajectory_record(traj, 0, &t, &v, eps, 6);
    printf("records %zu first %g %g\n", len, eps[0], eps[5]);
    lc_trajectory_free(traj);

    LcEnsemble *ens = NULL;
    if (lc_monte_carlo(sys, 8, &ens) != LC_STATUS_OK) return 1;
    double row[5];
    lc_ensemble_row(ens, 0, &row[0], &row[1], &row[2], &row[3], &row[4]);
    printf("ms_error0 %g\n", row[1]);
    lc_ensemble_free(ens);
    lc_system_free(sys);

    LcSystem *bad = NULL;
    LcStatus s = lc_system_from_json("{}", &bad);
    printf("bad %d null %d message %d\n", (int)s, bad == NULL, strlen(lc_last_error_message()) > 0);

    double m[1] = {2.0}, p[1] = {0}, res = -1;
    lc_solve_lyapunov(m, 1, p, &res);
    printf("lyapunov %g\n", p[0]);
    printf("gaussian_finite %d\n", isfinite(lc_gaussian(1, 0, 0, 0)));
    return 0;
}
