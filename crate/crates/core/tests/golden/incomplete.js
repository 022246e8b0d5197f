let t = 0;
if (t < limit) {
  t = t +
