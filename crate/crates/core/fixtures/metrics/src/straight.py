def area(width, height):
    # rectangle
    return width * height


SCALE = 2.5
print(area(3, 4) * SCALE)
