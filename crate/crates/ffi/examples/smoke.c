#include <assert.h>
#include <math.h>
#include <stdio.h>
#include <string.h>
#include "risloc.h"

int main(void) {
    assert(risloc_abi_version() == RISLOC_ABI_VERSION);

    risloc_experiment *h = risloc_experiment_desk();
    assert(h != NULL);
    assert(risloc_experiment_set_seed(h, 42) == RISLOC_OK);
    assert(risloc_experiment_set_trials(h, 2) == RISLOC_OK);
    assert(risloc_experiment_set(h, "snr_db_list", "10") == RISLOC_OK);

    assert(risloc_experiment_set(h, "bogus_key", "1") == RISLOC_CONFIG_ERROR);
    const char *msg = risloc_last_error_message();
    assert(msg != NULL && strstr(msg, "bogus_key") != NULL);

    risloc_trial_summary a, b;
    assert(risloc_run_trial(h, 10.0, 0, &a) == RISLOC_OK);
    assert(risloc_run_trial(h, 10.0, 0, &b) == RISLOC_OK);
    assert(a.failed == 0);
    assert(isfinite(a.pos_err_proposed_m));
    assert(memcmp(&a, &b, sizeof a) == 0);

    double peb = 0.0;
    assert(risloc_position_bound(h, 10.0, 10.0, 2.0, &peb) == RISLOC_OK);
    assert(isfinite(peb) && peb > 0.0);

    char *text = risloc_experiment_config_text(h);
    assert(text != NULL && strstr(text, "master_seed = 42") != NULL);
    risloc_string_free(text);

    assert(risloc_run_trial(NULL, 0.0, 0, &a) == RISLOC_NULL_ARGUMENT);
    risloc_experiment_free(h);
    risloc_experiment_free(NULL);
    printf("smoke ok (peb %.6f m, err %.6f m)\n", peb, a.pos_err_proposed_m);
    return 0;
}
