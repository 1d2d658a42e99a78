#include <math.h>
#include <stdio.h>
#include <string.h>
#include "pathlse.h"

#define CHECK(cond)                                                     \
    do {                                                                \
        if (!(cond)) {                                                  \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__,     \
                    #cond, pathlse_last_error_message());               \
            return 1;                                                   \
        }                                                               \
    } while (0)

int main(void) {
    double d, d1, d2;
    CHECK(pathlse_delta(1.0, 0.5, 1.0, &d, &d1, &d2) == PATHLSE_STATUS_OK);
    CHECK(fabs(d - 0.5) < 1e-12 && d1 == 0.0 && d2 == 0.0);
    CHECK(pathlse_delta(1.0, 1.2, 1.0, &d, NULL, NULL) == PATHLSE_STATUS_VALIDATION);
    CHECK(strstr(pathlse_last_error_message(), "Hurst") != NULL);

    PathlseModel *model = NULL;
    double ic[3] = {10.0, 5.0, 2.0};
    CHECK(pathlse_model_heat1d(8, 1.0, 0.0, 0.5, 1.0, ic, 3, &model) == PATHLSE_STATUS_OK);
    CHECK(pathlse_model_n_modes(model) == 8);

    PathlseTrajectories *traj = NULL;
    CHECK(pathlse_simulate(model, 256, 42, 0, PATHLSE_DEFAULT_MAX_MU_DT, &traj) == PATHLSE_STATUS_OK);
    CHECK(pathlse_trajectories_n_modes(traj) == 8);
    size_t n = pathlse_trajectories_n_points(traj);
    CHECK(n == 257);
    double row[257];
    CHECK(pathlse_trajectories_copy_mode(traj, 0, row, 257) == PATHLSE_STATUS_OK);
    CHECK(row[0] == 10.0);
    CHECK(pathlse_trajectories_copy_mode(traj, 0, row, 10) == PATHLSE_STATUS_BUFFER_TOO_SMALL);

    PathlseEstimate est;
    double theory;
    CHECK(pathlse_estimate(model, traj, &est) == PATHLSE_STATUS_OK);
    CHECK(pathlse_theoretical_estimate(model, traj, 1.0, &theory) == PATHLSE_STATUS_OK);
    CHECK(est.case_tag == PATHLSE_CASE_UNIQUE);
    CHECK(fabs(est.value - theory) < 1e-9);
    printf("estimate %.6f theoretical %.6f\n", est.value, theory);

    pathlse_trajectories_free(traj);
    pathlse_model_free(model);
    pathlse_model_free(NULL);
    return 0;
}
