x = read()
if x > 0:
    y = x
else:
    y = 0
z = y
