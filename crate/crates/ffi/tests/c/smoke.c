#include <stdio.h>
#include <string.h>
#include "caet.h"

int main(void) {
    double gm = 0.0;
    if (caet_geometric_mean(0.849, 22.9, 0.677, &gm) != CAET_STATUS_OK) return 1;
    if (gm < 0.291 || gm > 0.295) return 2;

    const char *refs[] = {"the cat sat on the mat"};
    double b = 0.0;
    if (caet_bleu("the cat sat on the mat", refs, 1, &b) != CAET_STATUS_OK || b != 100.0) return 3;

    CaetModel *m = NULL;
    if (caet_model_load("/nonexistent/model.ckpt", &m) != CAET_STATUS_IO || m != NULL) return 4;
    const char *msg = caet_last_error();
    if (msg == NULL || strlen(msg) == 0) return 5;

    printf("%s\n", caet_version());
    return 0;
}
